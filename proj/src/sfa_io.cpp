#include "nesya/sfa_io.hpp"

#include <fstream>
#include <map>
#include <optional>
#include <sstream>

namespace nesya {

namespace {

std::string_view trim(std::string_view s) {
    const char* ws = " \t\r";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> items;
    s = trim(s);
    if (s.empty())
        return items;
    std::size_t start = 0;
    while (true) {
        auto comma = s.find(',', start);
        items.emplace_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
        if (comma == std::string_view::npos)
            break;
        start = comma + 1;
    }
    return items;
}

struct PendingTransition {
    std::size_t line;
    std::string from, to, guard;
    std::size_t guard_column;
};

} // namespace

Sfa parse_sfa(std::string_view text) {
    std::optional<std::vector<std::string>> vars, states, accepting, order;
    std::optional<std::string> initial;
    std::vector<PendingTransition> pending;
    std::map<std::string, std::size_t, std::less<>> key_line;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    auto fail = [&](const std::string& msg) -> void {
        throw ParseError("line " + std::to_string(line_no) + ": " + msg, line_no);
    };

    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        auto hash = raw.find('#');
        std::string_view line = trim(hash == std::string_view::npos ? raw : raw.substr(0, hash));
        if (line.empty())
            continue;

        auto arrow = line.find("->");
        auto colon = line.find(':');
        if (colon == std::string_view::npos)
            fail("expected 'key: value' or 'from -> to : guard'");

        if (arrow != std::string_view::npos && arrow < colon) {
            std::string from(trim(line.substr(0, arrow)));
            std::string to(trim(line.substr(arrow + 2, colon - arrow - 2)));
            if (from.empty() || to.empty())
                fail("transition needs a source and a target state");
            auto guard_start = static_cast<std::size_t>(line.data() - raw.data()) + colon + 1;
            pending.push_back({line_no, std::move(from), std::move(to), std::string(line.substr(colon + 1)),
                               guard_start});
            continue;
        }

        std::string key(trim(line.substr(0, colon)));
        std::string_view value = line.substr(colon + 1);
        auto set_once = [&](auto& slot, auto v) {
            if (slot)
                fail("duplicate '" + key + "' line");
            slot = std::move(v);
        };
        key_line.emplace(key, line_no);
        if (!pending.empty() && (key == "vars" || key == "states"))
            fail("'" + key + "' must precede the transitions");
        if (key == "vars")
            set_once(vars, split_list(value));
        else if (key == "states")
            set_once(states, split_list(value));
        else if (key == "initial")
            set_once(initial, std::string(trim(value)));
        else if (key == "accepting")
            set_once(accepting, split_list(value));
        else if (key == "order")
            set_once(order, split_list(value));
        else
            fail("unknown key '" + key + "'");
    }

    line_no = 0;
    auto at_key = [&](std::string_view key) { line_no = key_line.contains(key) ? key_line.find(key)->second : 0; };
    if (!vars)
        fail("missing 'vars' line");
    if (!states || states->empty())
        fail("missing 'states' line");
    if (!initial)
        fail("missing 'initial' line");

    Vocabulary vocab;
    at_key("vars");
    try {
        vocab = Vocabulary(*vars);
    } catch (const Error& e) {
        fail(e.what());
    }

    at_key("states");
    for (const auto& s : *states)
        if (!is_identifier(s))
            fail("invalid state name '" + s + "'");
    auto state_index = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < states->size(); ++i)
            if ((*states)[i] == name)
                return i;
        fail("unknown state '" + name + "'");
        return 0;
    };

    at_key("initial");
    std::size_t init = state_index(*initial);
    at_key("accepting");
    std::vector<std::size_t> acc;
    for (const auto& s : accepting.value_or(std::vector<std::string>{}))
        acc.push_back(state_index(s));

    std::vector<std::size_t> var_order;
    if (order) {
        at_key("order");
        for (const auto& v : *order) {
            auto idx = vocab.find(v);
            if (!idx)
                fail("unknown variable '" + v + "' in order");
            var_order.push_back(*idx);
        }
    }

    std::vector<Transition> transitions;
    for (const auto& t : pending) {
        line_no = t.line;
        std::size_t from = state_index(t.from);
        std::size_t to = state_index(t.to);
        try {
            transitions.push_back({from, to, parse_formula(t.guard, vocab)});
        } catch (const ParseError& e) {
            fail(std::string(e.what()) + " (column " + std::to_string(t.guard_column + e.position() + 1) + ")");
        }
    }

    line_no = 0;
    try {
        return Sfa(std::move(vocab), std::move(*states), init, std::move(acc), std::move(transitions),
                   std::move(var_order));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(e.what(), 0);
    }
}

Sfa load_sfa(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_sfa(ss.str());
}

std::string format_sfa(const Sfa& sfa) {
    auto join = [](const auto& items, auto&& name) {
        std::string out;
        for (std::size_t i = 0; i < items.size(); ++i) {
            if (i)
                out += ", ";
            out += name(items[i]);
        }
        return out;
    };
    const auto& vocab = sfa.vocabulary();
    const auto& states = sfa.states();
    std::string out;
    out += "vars: " + join(vocab.names(), [](const std::string& s) { return s; }) + "\n";
    out += "states: " + join(states, [](const std::string& s) { return s; }) + "\n";
    out += "initial: " + states[sfa.initial()] + "\n";
    out += "accepting: " + join(sfa.accepting(), [&](std::size_t q) { return states[q]; }) + "\n";
    if (sfa.has_custom_order())
        out += "order: " + join(sfa.variable_order(), [&](std::size_t v) { return vocab.name(v); }) + "\n";
    for (const auto& t : sfa.transitions())
        out += states[t.from] + " -> " + states[t.to] + " : " + to_string(t.guard, vocab) + "\n";
    return out;
}

} // namespace nesya

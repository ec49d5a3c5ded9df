#include "safetune/rules.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace safetune {

using nlohmann::json;

struct Expression::Node {
    enum class Op { Number, Metric, Neg, Add, Sub, Mul, Div, Min, Max } op = Op::Number;
    double value = 0.0;
    std::string name;
    std::shared_ptr<const Node> lhs, rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Op = Expression::Node::Op;

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    NodePtr parse() {
        NodePtr n = expr();
        skip();
        if (pos_ != s_.size()) {
            fail("unexpected trailing input");
        }
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw InvalidInput("bad rule expression '" + s_ + "': " + why);
    }

    void skip() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) {
            ++pos_;
        }
    }

    bool eat(char c) {
        skip();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    static NodePtr make(Op op, NodePtr a, NodePtr b = nullptr) {
        auto n = std::make_shared<Expression::Node>();
        n->op = op;
        n->lhs = std::move(a);
        n->rhs = std::move(b);
        return n;
    }

    NodePtr expr() {
        NodePtr n = term();
        for (;;) {
            if (eat('+')) {
                n = make(Op::Add, n, term());
            } else if (eat('-')) {
                n = make(Op::Sub, n, term());
            } else {
                return n;
            }
        }
    }

    NodePtr term() {
        NodePtr n = unary();
        for (;;) {
            if (eat('*')) {
                n = make(Op::Mul, n, unary());
            } else if (eat('/')) {
                n = make(Op::Div, n, unary());
            } else {
                return n;
            }
        }
    }

    NodePtr unary() {
        if (eat('-')) {
            return make(Op::Neg, unary());
        }
        return primary();
    }

    NodePtr primary() {
        skip();
        if (eat('(')) {
            NodePtr n = expr();
            if (!eat(')')) {
                fail("missing ')'");
            }
            return n;
        }
        if (pos_ >= s_.size()) {
            fail("unexpected end");
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            std::size_t used = 0;
            double v = std::stod(s_.substr(pos_), &used);
            pos_ += used;
            auto n = std::make_shared<Expression::Node>();
            n->op = Op::Number;
            n->value = v;
            return n;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
                ++pos_;
            }
            std::string id = s_.substr(start, pos_ - start);
            if (id == "inf") {
                auto n = std::make_shared<Expression::Node>();
                n->op = Op::Number;
                n->value = std::numeric_limits<double>::infinity();
                return n;
            }
            if (id == "min" || id == "max") {
                if (!eat('(')) {
                    fail("expected '(' after " + id);
                }
                NodePtr a = expr();
                if (!eat(',')) {
                    fail("expected ',' in " + id);
                }
                NodePtr b = expr();
                if (!eat(')')) {
                    fail("missing ')'");
                }
                return make(id == "min" ? Op::Min : Op::Max, a, b);
            }
            auto n = std::make_shared<Expression::Node>();
            n->op = Op::Metric;
            n->name = id;
            return n;
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

double eval_node(const Expression::Node& n, const EnvMetrics& m) {
    switch (n.op) {
    case Op::Number: return n.value;
    case Op::Metric: {
        auto it = m.find(n.name);
        if (it == m.end()) {
            throw InvalidInput("rule expression references unknown metric '" + n.name + "'");
        }
        return it->second;
    }
    case Op::Neg: return -eval_node(*n.lhs, m);
    case Op::Add: return eval_node(*n.lhs, m) + eval_node(*n.rhs, m);
    case Op::Sub: return eval_node(*n.lhs, m) - eval_node(*n.rhs, m);
    case Op::Mul: return eval_node(*n.lhs, m) * eval_node(*n.rhs, m);
    case Op::Div: return eval_node(*n.lhs, m) / eval_node(*n.rhs, m);
    case Op::Min: return std::min(eval_node(*n.lhs, m), eval_node(*n.rhs, m));
    case Op::Max: return std::max(eval_node(*n.lhs, m), eval_node(*n.rhs, m));
    }
    return 0.0;
}

std::string expr_field(const json& rec, const char* key, const char* fallback) {
    if (!rec.contains(key)) {
        return fallback;
    }
    const json& v = rec.at(key);
    if (v.is_number()) {
        std::ostringstream ss;
        ss.precision(17);
        ss << v.get<double>();
        return ss.str();
    }
    return v.get<std::string>();
}

} // namespace

Expression Expression::parse(const std::string& text) {
    Expression e;
    e.text_ = text;
    e.root_ = Parser(text).parse();
    return e;
}

double Expression::eval(const EnvMetrics& metrics) const {
    if (!root_) {
        throw InvalidInput("evaluating an empty expression");
    }
    return eval_node(*root_, metrics);
}

std::pair<double, double> WhiteBoxRule::allowed_interval(const KnobSpace& space, const EnvMetrics& metrics) const {
    const KnobDef& k = space.knob(space.index_of(knob));
    double klo = k.lower, khi = k.upper;
    if (k.kind == KnobKind::Enumerated) {
        klo = 0.0;
        khi = static_cast<double>(k.levels.size() - 1);
    }
    double lo = std::max(lower.eval(metrics), klo);
    double hi = std::min(upper.eval(metrics), khi);
    if (lo > hi) {
        // The rule excludes the whole range; keep a degenerate interval at the nearer edge.
        lo = hi = std::clamp(lo, klo, khi);
    }
    if (widen != 1.0) {
        const double mid = 0.5 * (lo + hi);
        const double half = 0.5 * (hi - lo) * widen;
        lo = mid - half;
        hi = mid + half;
    }
    return {lo, hi};
}

RuleSet RuleSet::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("rules file is not valid JSON: ") + e.what());
    }
    RuleSet out;
    const json& list = doc.is_array() ? doc : doc.at("rules");
    try {
        static const std::set<std::string> known{"id",       "knob",           "min",           "max",
                                                 "ignore_threshold", "relax_threshold", "relax_factor"};
        for (const auto& rec : list) {
            for (const auto& [key, value] : rec.items()) {
                if (!known.contains(key)) {
                    throw InvalidInput("unknown rule field '" + key + "'");
                }
            }
            WhiteBoxRule r;
            r.id = rec.at("id").get<std::string>();
            r.knob = rec.at("knob").get<std::string>();
            r.lower = Expression::parse(expr_field(rec, "min", "-inf"));
            r.upper = Expression::parse(expr_field(rec, "max", "inf"));
            r.ignore_threshold = rec.value("ignore_threshold", 3);
            r.relax_threshold = rec.value("relax_threshold", 3);
            r.relax_factor = rec.value("relax_factor", 1.5);
            out.rules.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed rule record: ") + e.what());
    }
    std::set<std::string> ids;
    for (const auto& r : out.rules) {
        if (!ids.insert(r.id).second) {
            throw InvalidInput("duplicate rule id '" + r.id + "'");
        }
        if (r.ignore_threshold < 1 || r.relax_threshold < 1 || !(r.relax_factor > 1.0)) {
            throw InvalidInput("rule '" + r.id + "' has invalid thresholds");
        }
    }
    // Stored in id order so "lowest id" is "lowest index".
    std::sort(out.rules.begin(), out.rules.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

RuleSet RuleSet::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw InvalidInput("cannot open rules file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

std::string RuleSet::to_json_text() const {
    json list = json::array();
    for (const auto& r : rules) {
        list.push_back({{"id", r.id},
                        {"knob", r.knob},
                        {"min", r.lower.text()},
                        {"max", r.upper.text()},
                        {"ignore_threshold", r.ignore_threshold},
                        {"relax_threshold", r.relax_threshold},
                        {"relax_factor", r.relax_factor}});
    }
    return json{{"rules", list}}.dump(2);
}

void RuleSet::validate(const KnobSpace& space) const {
    for (const auto& r : rules) {
        space.index_of(r.knob);
    }
    if (ignored && *ignored >= rules.size()) {
        throw InvalidInput("ignored rule index out of range");
    }
}

RuleSet RuleSet::restricted_to(const KnobSpace& space) const {
    RuleSet out;
    for (const auto& r : rules) {
        bool known = std::any_of(space.knobs().begin(), space.knobs().end(),
                                 [&](const KnobDef& k) { return k.name == r.knob; });
        if (known) {
            out.rules.push_back(r);
        }
    }
    return out;
}

void apply_relaxation(RuleSet& rules, const std::vector<std::size_t>& conflicting,
                      const std::optional<RelaxationFeedback>& feedback) {
    if (feedback) {
        WhiteBoxRule& r = rules.rules.at(feedback->rule);
        if (feedback->safe) {
            r.conflict_safe_counter += 1;
            if (r.conflict_safe_counter >= r.relax_threshold) {
                r.widen *= r.relax_factor;
                r.conflict_counter = 0;
                r.conflict_safe_counter = 0;
            }
        }
    }
    std::optional<std::size_t> pick;
    for (std::size_t i : conflicting) {
        WhiteBoxRule& r = rules.rules.at(i);
        r.conflict_counter += 1;
        if (r.conflict_counter >= r.ignore_threshold && (!pick || i < *pick)) {
            pick = i;
        }
    }
    if (pick) {
        rules.ignored = pick;
    }
}

std::string default_rules_json() {
    return R"json({
  "rules": [
    {"id": "r01_buffer_pool_cap", "knob": "innodb_buffer_pool_size", "max": "total_memory_mb * 0.75"},
    {"id": "r02_thread_concurrency_floor", "knob": "innodb_thread_concurrency", "min": "vcpus / 2"},
    {"id": "r03_key_buffer_covers_myisam", "knob": "key_buffer_size", "min": "myisam_index_mb"},
    {"id": "r04_key_buffer_cap", "knob": "key_buffer_size", "max": "total_memory_mb / 4"},
    {"id": "r05_join_buffer_unindexed_joins", "knob": "join_buffer_size", "min": "min(joins_without_index_per_day / 250, 64)"},
    {"id": "r06_io_capacity_floor", "knob": "innodb_io_capacity", "min": "200"},
    {"id": "r07_tmp_table_cap", "knob": "tmp_table_size", "max": "total_memory_mb / 16"},
    {"id": "r08_read_io_threads_cap", "knob": "innodb_read_io_threads", "max": "vcpus * 4"}
  ]
})json";
}

} // namespace safetune

#include "gdis/scm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gdis {

// ---- CausalDag --------------------------------------------------------------

CausalDag::CausalDag(std::vector<std::string> variables,
                     std::map<std::string, std::vector<std::string>> parents)
    : names_(std::move(variables)) {
    const int n = size();
    std::map<std::string, int> idx;
    for (int v = 0; v < n; ++v) {
        if (!idx.emplace(names_[v], v).second)
            throw ValidationError("duplicate variable '" + names_[v] + "'");
    }
    parents_.assign(n, {});
    children_.assign(n, {});
    for (const auto& [child, pas] : parents) {
        auto it = idx.find(child);
        if (it == idx.end()) throw ValidationError("unknown variable '" + child + "'");
        for (const auto& pa : pas) {
            auto pit = idx.find(pa);
            if (pit == idx.end()) throw ValidationError("unknown variable '" + pa + "'");
            if (pit->second == it->second)
                throw ValidationError("variable '" + pa + "' cannot be its own parent");
            parents_[it->second].push_back(pit->second);
        }
    }
    for (int v = 0; v < n; ++v) {
        auto sorted = parents_[v];
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
            throw ValidationError("duplicate parent for variable '" + names_[v] + "'");
        for (int pa : parents_[v]) children_[pa].push_back(v);
    }

    // Kahn topological sort doubles as the acyclicity check.
    std::vector<int> indeg(n);
    for (int v = 0; v < n; ++v) indeg[v] = static_cast<int>(parents_[v].size());
    std::vector<int> stack;
    for (int v = 0; v < n; ++v)
        if (indeg[v] == 0) stack.push_back(v);
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        topo_.push_back(v);
        for (int c : children_[v])
            if (--indeg[c] == 0) stack.push_back(c);
    }
    if (static_cast<int>(topo_.size()) != n) throw ValidationError("graph contains a cycle");
}

int CausalDag::index(const std::string& name) const {
    for (int v = 0; v < size(); ++v)
        if (names_[v] == name) return v;
    throw ValidationError("unknown variable '" + name + "'");
}

bool CausalDag::has_edge(int from, int to) const {
    const auto& pas = parents_[to];
    return std::find(pas.begin(), pas.end(), from) != pas.end();
}

std::vector<bool> CausalDag::descendants(int v) const {
    std::vector<bool> seen(size(), false);
    std::vector<int> stack = {v};
    while (!stack.empty()) {
        int x = stack.back();
        stack.pop_back();
        for (int c : children_[x])
            if (!seen[c]) {
                seen[c] = true;
                stack.push_back(c);
            }
    }
    return seen;
}

std::vector<bool> CausalDag::ancestors_closure(const std::vector<bool>& roots) const {
    std::vector<bool> seen = roots;
    std::vector<int> stack;
    for (int v = 0; v < size(); ++v)
        if (seen[v]) stack.push_back(v);
    while (!stack.empty()) {
        int x = stack.back();
        stack.pop_back();
        for (int pa : parents_[x])
            if (!seen[pa]) {
                seen[pa] = true;
                stack.push_back(pa);
            }
    }
    return seen;
}

CausalDag CausalDag::with_edge_removed(const std::string& from, const std::string& to) const {
    int f = index(from), t = index(to);
    if (!has_edge(f, t))
        throw ValidationError("no edge " + from + " -> " + to + " to remove");
    std::map<std::string, std::vector<std::string>> parents;
    for (int v = 0; v < size(); ++v) {
        std::vector<std::string> pas;
        for (int pa : parents_[v])
            if (!(v == t && pa == f)) pas.push_back(names_[pa]);
        parents[names_[v]] = pas;
    }
    return CausalDag(names_, parents);
}

CausalDag CausalDag::without_outgoing(const std::string& v) const {
    int s = index(v);
    std::map<std::string, std::vector<std::string>> parents;
    for (int x = 0; x < size(); ++x) {
        std::vector<std::string> pas;
        for (int pa : parents_[x])
            if (pa != s) pas.push_back(names_[pa]);
        parents[names_[x]] = pas;
    }
    return CausalDag(names_, parents);
}

CausalDag make_summary_dag() {
    return CausalDag({"Wx", "X", "Wt", "Wy", "T", "Y"},
                     {{"Wt", {"Wx"}},
                      {"Wy", {"Wx", "Wt"}},
                      {"T", {"Wx", "X"}},
                      {"Y", {"Wx", "X", "Wt", "Wy", "T"}}});
}

// ---- trail machinery --------------------------------------------------------

std::vector<std::vector<int>> all_simple_paths(const CausalDag& dag, int a, int b) {
    std::vector<std::vector<int>> paths;
    std::vector<int> current = {a};
    std::vector<bool> visited(dag.size(), false);
    visited[a] = true;
    std::function<void(int)> dfs = [&](int v) {
        if (v == b) {
            paths.push_back(current);
            return;
        }
        for (int nb = 0; nb < dag.size(); ++nb) {
            if (visited[nb] || !dag.adjacent(v, nb)) continue;
            visited[nb] = true;
            current.push_back(nb);
            dfs(nb);
            current.pop_back();
            visited[nb] = false;
        }
    };
    dfs(a);
    return paths;
}

bool path_blocked(const CausalDag& dag, const std::vector<int>& path, const std::set<int>& z) {
    for (std::size_t i = 1; i + 1 < path.size(); ++i) {
        int prev = path[i - 1], v = path[i], next = path[i + 1];
        bool collider = dag.has_edge(prev, v) && dag.has_edge(next, v);
        if (collider) {
            if (z.count(v)) continue;  // opened by conditioning on the collider
            auto desc = dag.descendants(v);
            bool opened = false;
            for (int d : z)
                if (desc[d]) opened = true;
            if (!opened) return true;
        } else if (z.count(v)) {
            return true;
        }
    }
    return false;
}

bool is_backdoor_path(const CausalDag& dag, const std::vector<int>& path) {
    return path.size() >= 2 && dag.has_edge(path[1], path[0]);
}

namespace {

std::set<int> resolve(const CausalDag& dag, const std::set<std::string>& names) {
    std::set<int> out;
    for (const auto& n : names) out.insert(dag.index(n));
    return out;
}

void require_disjoint(const std::set<int>& a, const std::set<int>& b, const char* what) {
    for (int v : a)
        if (b.count(v)) throw ValidationError(std::string("d-separation query sets overlap: ") + what);
}

}  // namespace

bool d_separated(const CausalDag& dag, const std::set<std::string>& a,
                 const std::set<std::string>& b, const std::set<std::string>& z) {
    auto A = resolve(dag, a), B = resolve(dag, b), Z = resolve(dag, z);
    require_disjoint(A, B, "a vs b");
    require_disjoint(A, Z, "a vs z");
    require_disjoint(B, Z, "b vs z");

    std::vector<bool> in_z(dag.size(), false);
    for (int v : Z) in_z[v] = true;
    auto anc_z = dag.ancestors_closure(in_z);

    // Reachability over (node, arrival direction): FromChild means the trail
    // arrived against an edge (child -> this node), FromParent along one.
    enum Dir { FromChild = 0, FromParent = 1 };
    std::vector<std::array<bool, 2>> visited(dag.size(), {false, false});
    std::vector<std::pair<int, Dir>> stack;
    for (int s : A) stack.push_back({s, FromChild});

    while (!stack.empty()) {
        auto [v, dir] = stack.back();
        stack.pop_back();
        if (visited[v][dir]) continue;
        visited[v][dir] = true;
        if (!in_z[v] && B.count(v)) return false;

        if (dir == FromChild) {
            if (!in_z[v]) {
                for (int pa : dag.parents(v)) stack.push_back({pa, FromChild});
                for (int c : dag.children(v)) stack.push_back({c, FromParent});
            }
        } else {
            if (!in_z[v])
                for (int c : dag.children(v)) stack.push_back({c, FromParent});
            if (anc_z[v])  // collider (or ancestor of one in z): trail may turn
                for (int pa : dag.parents(v)) stack.push_back({pa, FromChild});
        }
    }
    return true;
}

bool d_separated_enum(const CausalDag& dag, const std::set<std::string>& a,
                      const std::set<std::string>& b, const std::set<std::string>& z) {
    auto A = resolve(dag, a), B = resolve(dag, b), Z = resolve(dag, z);
    require_disjoint(A, B, "a vs b");
    require_disjoint(A, Z, "a vs z");
    require_disjoint(B, Z, "b vs z");
    for (int s : A)
        for (int t : B)
            for (const auto& path : all_simple_paths(dag, s, t))
                if (!path_blocked(dag, path, Z)) return false;
    return true;
}

IgnorabilityResult verify_sequential_ignorability(const CausalDag& dag,
                                                  const std::set<std::string>& w,
                                                  const std::string& exposure,
                                                  const std::string& mediator,
                                                  const std::string& outcome) {
    const int e = dag.index(exposure), m = dag.index(mediator), y = dag.index(outcome);
    for (const auto& name : w) {
        int v = dag.index(name);
        if (v == e || v == m || v == y)
            throw ValidationError("adjustment set may not contain '" + name + "'");
    }
    std::set<int> wz = resolve(dag, w);

    IgnorabilityResult res;

    // 1G-1: w and the exposure jointly block every exposure-avoiding backdoor
    // path from the mediator to the outcome.
    {
        std::set<int> blockers = wz;
        blockers.insert(e);
        res.mediator_outcome_blocked = true;
        for (const auto& path : all_simple_paths(dag, m, y)) {
            if (!is_backdoor_path(dag, path)) continue;
            bool through_exposure = false;
            for (std::size_t i = 1; i + 1 < path.size(); ++i)
                if (path[i] == e) through_exposure = true;
            if (through_exposure) continue;
            if (!path_blocked(dag, path, blockers)) res.mediator_outcome_blocked = false;
        }
    }

    // 1G-2: w blocks every backdoor path from the exposure to the mediator
    // and to the outcome, and contains no descendant of the exposure.
    {
        res.treatment_paths_blocked = true;
        for (int target : {m, y})
            for (const auto& path : all_simple_paths(dag, e, target)) {
                if (!is_backdoor_path(dag, path)) continue;
                if (!path_blocked(dag, path, wz)) res.treatment_paths_blocked = false;
            }
        auto desc = dag.descendants(e);
        for (int v : wz)
            if (desc[v]) res.treatment_paths_blocked = false;
    }
    return res;
}

std::vector<ProofPath> adjustment_proof_paths() {
    const std::set<std::string> med_set = {"Wx", "Wt"};
    const std::set<std::string> exp_set = {"Wx"};
    const std::set<std::string> ste_set = {"X", "Wx"};
    return {
        {{"Wy", "Wx", "Y"}, med_set, "mediator-outcome"},
        {{"Wy", "Wx", "T", "X", "Y"}, med_set, "mediator-outcome"},
        {{"Wy", "Wx", "T", "Y"}, med_set, "mediator-outcome"},
        {{"Wt", "Wx", "Wy"}, exp_set, "exposure-mediator"},
        {{"Wt", "Wx", "Y", "Wy"}, exp_set, "exposure-mediator"},
        {{"Wt", "Wx", "T", "Y", "Wy"}, exp_set, "exposure-mediator"},
        {{"Wt", "Wx", "T", "X", "Y", "Wy"}, exp_set, "exposure-mediator"},
        {{"Wt", "Wx", "Y"}, exp_set, "exposure-outcome"},
        {{"Wt", "Wx", "Wy", "Y"}, exp_set, "exposure-outcome"},
        {{"Wt", "Wx", "T", "Y"}, exp_set, "exposure-outcome"},
        {{"Wt", "Wx", "T", "X", "Y"}, exp_set, "exposure-outcome"},
        {{"T", "X", "Y"}, ste_set, "self-treatment"},
        {{"T", "Wx", "Wt", "Y"}, ste_set, "self-treatment"},
        {{"T", "Wx", "Wt", "Wy", "Y"}, ste_set, "self-treatment"},
        {{"T", "Wx", "Wy", "Y"}, ste_set, "self-treatment"},
        {{"T", "Wx", "Wy", "Wt", "Y"}, ste_set, "self-treatment"},
    };
}

std::vector<ProofPathCheck> check_adjustment_proof_paths(const CausalDag& dag) {
    std::vector<ProofPathCheck> checks;
    for (const auto& pp : adjustment_proof_paths()) {
        ProofPathCheck c;
        c.path = pp;
        std::vector<int> path;
        for (const auto& n : pp.nodes) path.push_back(dag.index(n));
        c.exists = true;
        for (std::size_t i = 0; i + 1 < path.size(); ++i)
            if (!dag.adjacent(path[i], path[i + 1])) c.exists = false;
        if (c.exists) {
            c.backdoor = is_backdoor_path(dag, path);
            c.blocked = path_blocked(dag, path, resolve(dag, pp.blocking_set));
        }
        checks.push_back(std::move(c));
    }
    return checks;
}

// ---- JointTable --------------------------------------------------------------

JointTable::JointTable(std::vector<std::string> names, std::vector<int> cards)
    : names_(std::move(names)), cards_(std::move(cards)) {
    if (names_.size() != cards_.size())
        throw ValidationError("joint table: names/cards size mismatch");
    std::size_t cells = 1;
    for (int c : cards_) {
        if (c <= 0) throw ValidationError("joint table: nonpositive cardinality");
        cells *= static_cast<std::size_t>(c);
    }
    p_.assign(cells, 0.0);
}

int JointTable::index(const std::string& name) const {
    for (int v = 0; v < size(); ++v)
        if (names_[v] == name) return v;
    throw ValidationError("joint table: unknown variable '" + name + "'");
}

std::size_t JointTable::flat_index(const std::vector<int>& assignment) const {
    std::size_t flat = 0;
    for (int v = 0; v < size(); ++v) {
        if (assignment[v] < 0 || assignment[v] >= cards_[v])
            throw ValidationError("joint table: value out of domain for '" + names_[v] + "'");
        flat = flat * static_cast<std::size_t>(cards_[v]) + assignment[v];
    }
    return flat;
}

double& JointTable::at(const std::vector<int>& assignment) { return p_[flat_index(assignment)]; }

double JointTable::total() const {
    double t = 0.0;
    for (double v : p_) t += v;
    return t;
}

void JointTable::normalize() {
    double t = total();
    if (t <= 0.0) throw ComputeError("joint table: cannot normalize zero mass");
    for (double& v : p_) v /= t;
}

namespace {
std::string event_string(const std::map<std::string, int>& fixed) {
    std::ostringstream ss;
    ss << "P(";
    bool first = true;
    for (const auto& [name, val] : fixed) {
        if (!first) ss << ", ";
        ss << name << "=" << val;
        first = false;
    }
    ss << ")";
    return ss.str();
}
}  // namespace

double JointTable::marginal(const std::map<std::string, int>& fixed) const {
    std::vector<int> want(size(), -1);
    for (const auto& [name, val] : fixed) {
        int v = index(name);
        if (val < 0 || val >= cards_[v])
            throw ValidationError("marginal: value " + std::to_string(val) +
                                  " out of domain for '" + name + "'");
        want[v] = val;
    }
    double total = 0.0;
    for_each([&](const std::vector<int>& a, double prob) {
        for (int v = 0; v < size(); ++v)
            if (want[v] >= 0 && a[v] != want[v]) return;
        total += prob;
    });
    return total;
}

double JointTable::expectation(int var, const std::map<std::string, int>& given) const {
    std::vector<int> want(size(), -1);
    for (const auto& [name, val] : given) want[index(name)] = val;
    double mass = 0.0, acc = 0.0;
    for_each([&](const std::vector<int>& a, double prob) {
        for (int v = 0; v < size(); ++v)
            if (want[v] >= 0 && a[v] != want[v]) return;
        mass += prob;
        acc += prob * a[var];
    });
    if (mass <= 0.0)
        throw OverlapViolation("overlap violation: conditioning event " +
                               event_string(given) + " has zero probability");
    return acc / mass;
}

double JointTable::expectation(const std::string& var,
                               const std::map<std::string, int>& given) const {
    return expectation(index(var), given);
}

// ---- DiscreteSCM --------------------------------------------------------------

namespace {

std::size_t parent_config_count(const DiscreteSCM& scm, int v) {
    std::size_t n = 1;
    for (int pa : scm.dag.parents(v)) n *= static_cast<std::size_t>(scm.card[pa]);
    return n;
}

std::size_t parent_config_index(const DiscreteSCM& scm, int v, const std::vector<int>& values) {
    std::size_t idx = 0;
    for (int pa : scm.dag.parents(v))
        idx = idx * static_cast<std::size_t>(scm.card[pa]) + values[pa];
    return idx;
}

}  // namespace

void DiscreteSCM::validate() const {
    const int n = dag.size();
    if (static_cast<int>(card.size()) != n || static_cast<int>(noise_card.size()) != n ||
        static_cast<int>(noise_probs.size()) != n || static_cast<int>(mechanism.size()) != n)
        throw ValidationError("scm: per-variable arrays must match the dag size");
    for (int v = 0; v < n; ++v) {
        if (card[v] < 1) throw ValidationError("scm: cardinality must be positive");
        if (noise_card[v] < 1) throw ValidationError("scm: noise cardinality must be positive");
        if (static_cast<int>(noise_probs[v].size()) != noise_card[v])
            throw ValidationError("scm: noise table size mismatch for '" + dag.names()[v] + "'");
        double total = 0.0;
        for (double p : noise_probs[v]) {
            if (p < 0.0) throw ValidationError("scm: negative noise probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-12)
            throw ValidationError("scm: noise probabilities for '" + dag.names()[v] +
                                  "' sum to " + std::to_string(total));
        std::size_t expect = parent_config_count(*this, v) * noise_card[v];
        if (mechanism[v].size() != expect)
            throw ValidationError("scm: mechanism for '" + dag.names()[v] + "' has " +
                                  std::to_string(mechanism[v].size()) + " entries, expected " +
                                  std::to_string(expect));
        for (int val : mechanism[v])
            if (val < 0 || val >= card[v])
                throw ValidationError("scm: mechanism value out of domain for '" +
                                      dag.names()[v] + "'");
    }
}

int DiscreteSCM::evaluate(int v, const std::vector<int>& values, int noise_value) const {
    std::size_t pa = parent_config_index(*this, v, values);
    return mechanism[v][pa * static_cast<std::size_t>(noise_card[v]) + noise_value];
}

std::vector<int> DiscreteSCM::world(const std::map<int, int>& forced,
                                    const std::vector<int>& noise_config) const {
    std::vector<int> values(dag.size(), 0);
    for (int v : dag.topological_order()) {
        auto it = forced.find(v);
        values[v] = it != forced.end() ? it->second : evaluate(v, values, noise_config[v]);
    }
    return values;
}

std::vector<std::vector<double>> DiscreteSCM::conditional_tables() const {
    std::vector<std::vector<double>> cpt(dag.size());
    for (int v = 0; v < dag.size(); ++v) {
        std::size_t configs = parent_config_count(*this, v);
        cpt[v].assign(configs * card[v], 0.0);
        for (std::size_t pa = 0; pa < configs; ++pa)
            for (int u = 0; u < noise_card[v]; ++u) {
                int val = mechanism[v][pa * noise_card[v] + u];
                cpt[v][pa * card[v] + val] += noise_probs[v][u];
            }
    }
    return cpt;
}

JointTable DiscreteSCM::joint() const {
    JointTable jt(dag.names(), card);
    auto cpt = conditional_tables();
    std::vector<int> a(dag.size(), 0);
    bool done = false;
    while (!done) {
        double p = 1.0;
        for (int v = 0; v < dag.size(); ++v) {
            std::size_t pa = parent_config_index(*this, v, a);
            p *= cpt[v][pa * card[v] + a[v]];
        }
        jt.at(a) = p;
        done = true;
        for (int v = dag.size() - 1; v >= 0; --v) {
            if (++a[v] < card[v]) {
                done = false;
                break;
            }
            a[v] = 0;
        }
    }
    return jt;
}

std::vector<int> DiscreteSCM::sample(Rng& rng, const std::map<int, int>& forced) const {
    std::vector<int> noise(dag.size(), 0);
    for (int v = 0; v < dag.size(); ++v) {
        double r = rng.uniform();
        double acc = 0.0;
        for (int u = 0; u < noise_card[v]; ++u) {
            acc += noise_probs[v][u];
            if (r < acc || u == noise_card[v] - 1) {
                noise[v] = u;
                break;
            }
        }
    }
    return world(forced, noise);
}

JointTable interventional_distribution(const DiscreteSCM& scm,
                                       const std::map<std::string, int>& do_values) {
    scm.validate();
    std::map<int, int> forced;
    for (const auto& [name, val] : do_values) {
        int v = scm.dag.index(name);
        if (val < 0 || val >= scm.card[v])
            throw ValidationError("do(" + name + "=" + std::to_string(val) +
                                  ") is outside the domain of size " +
                                  std::to_string(scm.card[v]));
        forced[v] = val;
    }

    std::vector<int> rest;
    for (int v = 0; v < scm.dag.size(); ++v)
        if (!forced.count(v)) rest.push_back(v);
    std::vector<std::string> names;
    std::vector<int> cards;
    for (int v : rest) {
        names.push_back(scm.dag.names()[v]);
        cards.push_back(scm.card[v]);
    }
    JointTable jt(names, cards);

    auto cpt = scm.conditional_tables();
    std::vector<int> full(scm.dag.size(), 0);
    for (const auto& [v, val] : forced) full[v] = val;

    std::vector<int> a(rest.size(), 0);
    bool done = rest.empty();
    while (true) {
        for (std::size_t i = 0; i < rest.size(); ++i) full[rest[i]] = a[i];
        // Truncated factorization: intervened variables contribute no factor.
        double p = 1.0;
        for (int v = 0; v < scm.dag.size(); ++v) {
            if (forced.count(v)) continue;
            std::size_t pa = parent_config_index(scm, v, full);
            p *= cpt[v][pa * scm.card[v] + full[v]];
        }
        jt.at(a) = p;
        if (done) break;
        done = true;
        for (int i = static_cast<int>(rest.size()) - 1; i >= 0; --i) {
            if (++a[i] < cards[i]) {
                done = false;
                break;
            }
            a[i] = 0;
        }
        if (done) break;
    }
    return jt;
}

namespace {

void check_query(const DiscreteSCM& scm, const EffectQuery& q) {
    int wt = scm.dag.index("Wt"), t = scm.dag.index("T");
    for (int lvl : {q.w_t, q.w_t_prime})
        if (lvl < 0 || lvl >= scm.card[wt])
            throw ValidationError("exposure level " + std::to_string(lvl) +
                                  " outside the Wt domain");
    for (int lvl : {q.t, q.t_prime})
        if (lvl < 0 || lvl >= scm.card[t])
            throw ValidationError("treatment level " + std::to_string(lvl) +
                                  " outside the T domain");
}

}  // namespace

double nested_counterfactual_mean(const DiscreteSCM& scm, const EffectQuery& q,
                                  PeerEffect target) {
    scm.validate();
    check_query(scm, q);
    const int wt = scm.dag.index("Wt");
    const int wy = scm.dag.index("Wy");
    const int y = scm.dag.index("Y");

    double direct = 0.0, indirect = 0.0;
    std::vector<int> noise(scm.dag.size(), 0);
    while (true) {
        double p = 1.0;
        for (int v = 0; v < scm.dag.size(); ++v) p *= scm.noise_probs[v][noise[v]];
        if (p > 0.0) {
            auto w_alt = scm.world({{wt, q.w_t_prime}}, noise);
            int mediator_alt = w_alt[wy];
            auto w_nested = scm.world({{wt, q.w_t}, {wy, mediator_alt}}, noise);
            auto w_base = scm.world({{wt, q.w_t}}, noise);
            direct += p * (w_alt[y] - w_nested[y]);
            indirect += p * (w_nested[y] - w_base[y]);
        }
        int v = scm.dag.size() - 1;
        for (; v >= 0; --v) {
            if (++noise[v] < scm.noise_card[v]) break;
            noise[v] = 0;
        }
        if (v < 0) break;
    }
    return target == PeerEffect::Direct ? direct : indirect;
}

double interventional_ste(const DiscreteSCM& scm, const EffectQuery& q) {
    check_query(scm, q);
    auto alt = interventional_distribution(scm, {{"T", q.t_prime}});
    auto base = interventional_distribution(scm, {{"T", q.t}});
    return alt.expectation("Y", {}) - base.expectation("Y", {});
}

double identified_pde(const JointTable& joint, const EffectQuery& q) {
    const int wx_card = joint.cards()[joint.index("Wx")];
    const int wy_card = joint.cards()[joint.index("Wy")];
    double pde = 0.0;
    for (int wx = 0; wx < wx_card; ++wx) {
        double p_wx = joint.marginal({{"Wx", wx}});
        if (p_wx <= 0.0) continue;
        double denom = joint.marginal({{"Wt", q.w_t_prime}, {"Wx", wx}});
        if (denom <= 0.0)
            throw OverlapViolation("overlap violation: P(Wt=" + std::to_string(q.w_t_prime) +
                                   ", Wx=" + std::to_string(wx) + ") = 0");
        for (int wy = 0; wy < wy_card; ++wy) {
            double med = joint.marginal({{"Wy", wy}, {"Wt", q.w_t_prime}, {"Wx", wx}}) / denom;
            if (med <= 0.0) continue;
            double e_alt = joint.expectation(
                "Y", {{"Wt", q.w_t_prime}, {"Wy", wy}, {"Wx", wx}});
            double e_base = joint.expectation("Y", {{"Wt", q.w_t}, {"Wy", wy}, {"Wx", wx}});
            pde += p_wx * med * (e_alt - e_base);
        }
    }
    return pde;
}

double identified_pie(const JointTable& joint, const EffectQuery& q) {
    const int wx_card = joint.cards()[joint.index("Wx")];
    const int wy_card = joint.cards()[joint.index("Wy")];
    double pie = 0.0;
    for (int wx = 0; wx < wx_card; ++wx) {
        double p_wx = joint.marginal({{"Wx", wx}});
        if (p_wx <= 0.0) continue;
        double d_alt = joint.marginal({{"Wt", q.w_t_prime}, {"Wx", wx}});
        double d_base = joint.marginal({{"Wt", q.w_t}, {"Wx", wx}});
        if (d_alt <= 0.0 || d_base <= 0.0)
            throw OverlapViolation("overlap violation: P(Wt=" +
                                   std::to_string(d_alt <= 0.0 ? q.w_t_prime : q.w_t) +
                                   ", Wx=" + std::to_string(wx) + ") = 0");
        for (int wy = 0; wy < wy_card; ++wy) {
            double m_alt = joint.marginal({{"Wy", wy}, {"Wt", q.w_t_prime}, {"Wx", wx}}) / d_alt;
            double m_base = joint.marginal({{"Wy", wy}, {"Wt", q.w_t}, {"Wx", wx}}) / d_base;
            double diff = m_alt - m_base;
            if (diff == 0.0) continue;
            double e = joint.expectation("Y", {{"Wt", q.w_t}, {"Wy", wy}, {"Wx", wx}});
            pie += p_wx * e * diff;
        }
    }
    return pie;
}

double identified_ste(const JointTable& joint, const EffectQuery& q) {
    const int x_card = joint.cards()[joint.index("X")];
    const int wx_card = joint.cards()[joint.index("Wx")];
    double ste = 0.0;
    for (int x = 0; x < x_card; ++x) {
        double p_x = joint.marginal({{"X", x}});
        if (p_x <= 0.0) continue;
        for (int wx = 0; wx < wx_card; ++wx) {
            double p_wx = joint.marginal({{"Wx", wx}});
            if (p_wx <= 0.0) continue;
            double e_alt = joint.expectation("Y", {{"T", q.t_prime}, {"X", x}, {"Wx", wx}});
            double e_base = joint.expectation("Y", {{"T", q.t}, {"X", x}, {"Wx", wx}});
            ste += p_x * p_wx * (e_alt - e_base);
        }
    }
    return ste;
}

DiscreteSCM random_summary_scm(int max_card, Rng& rng) {
    if (max_card < 2 || max_card > 4)
        throw ValidationError("random_summary_scm: max_card must be in [2, 4]");
    DiscreteSCM scm{make_summary_dag(), {}, {}, {}, {}};
    const int n = scm.dag.size();
    scm.card.resize(n);
    scm.noise_card.resize(n);
    scm.noise_probs.resize(n);
    scm.mechanism.resize(n);
    for (int v = 0; v < n; ++v) {
        int c = 2 + static_cast<int>(rng.integer(max_card - 1));
        scm.card[v] = c;
        scm.noise_card[v] = c;
        scm.noise_probs[v].resize(c);
        double total = 0.0;
        for (double& p : scm.noise_probs[v]) {
            p = rng.uniform(0.2, 1.0);
            total += p;
        }
        for (double& p : scm.noise_probs[v]) p /= total;
    }
    for (int v = 0; v < n; ++v) {
        std::size_t configs = parent_config_count(scm, v);
        scm.mechanism[v].resize(configs * scm.card[v]);
        std::vector<int> perm(scm.card[v]);
        for (std::size_t pa = 0; pa < configs; ++pa) {
            for (int i = 0; i < scm.card[v]; ++i) perm[i] = i;
            rng.shuffle(perm);
            // Noise value permuted per parent configuration keeps every
            // conditional strictly positive, so overlap always holds.
            for (int u = 0; u < scm.noise_card[v]; ++u)
                scm.mechanism[v][pa * scm.noise_card[v] + u] = perm[u];
        }
    }
    scm.validate();
    return scm;
}

std::string DiscreteSCM::to_json() const {
    nlohmann::json vars = nlohmann::json::array();
    for (int v = 0; v < dag.size(); ++v) {
        nlohmann::json entry;
        entry["name"] = dag.names()[v];
        entry["card"] = card[v];
        std::vector<std::string> pas;
        for (int pa : dag.parents(v)) pas.push_back(dag.names()[pa]);
        entry["parents"] = pas;
        entry["noise"] = noise_probs[v];
        entry["mechanism"] = mechanism[v];
        vars.push_back(std::move(entry));
    }
    nlohmann::json j;
    j["variables"] = std::move(vars);
    return j.dump(2);
}

DiscreteSCM DiscreteSCM::from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    std::vector<std::string> names;
    std::map<std::string, std::vector<std::string>> parents;
    for (const auto& entry : j.at("variables")) {
        std::string name = entry.at("name").get<std::string>();
        names.push_back(name);
        parents[name] = entry.at("parents").get<std::vector<std::string>>();
    }
    DiscreteSCM scm{CausalDag(names, parents), {}, {}, {}, {}};
    for (const auto& entry : j.at("variables")) {
        scm.card.push_back(entry.at("card").get<int>());
        auto noise = entry.at("noise").get<std::vector<double>>();
        scm.noise_card.push_back(static_cast<int>(noise.size()));
        scm.noise_probs.push_back(std::move(noise));
        scm.mechanism.push_back(entry.at("mechanism").get<std::vector<int>>());
    }
    scm.validate();
    return scm;
}

}  // namespace gdis

#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "gdis/common.hpp"

namespace gdis {

/// Directed acyclic graph over named variables.
class CausalDag {
  public:
    CausalDag(std::vector<std::string> variables,
              std::map<std::string, std::vector<std::string>> parents);

    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    int index(const std::string& name) const;

    const std::vector<int>& parents(int v) const { return parents_[v]; }
    const std::vector<int>& children(int v) const { return children_[v]; }
    bool has_edge(int from, int to) const;
    bool adjacent(int a, int b) const { return has_edge(a, b) || has_edge(b, a); }

    /// Variables in parent-before-child order.
    const std::vector<int>& topological_order() const { return topo_; }

    /// Strict descendants of v (v excluded).
    std::vector<bool> descendants(int v) const;
    /// Strict ancestors of every node in the set, plus the set itself.
    std::vector<bool> ancestors_closure(const std::vector<bool>& roots) const;

    CausalDag with_edge_removed(const std::string& from, const std::string& to) const;
    /// Backdoor graph: all edges leaving v removed.
    CausalDag without_outgoing(const std::string& v) const;

  private:
    std::vector<std::string> names_;
    std::vector<std::vector<int>> parents_;
    std::vector<std::vector<int>> children_;
    std::vector<int> topo_;
};

/// The six-variable summary graph used throughout: roots Wx and X; Wx feeds
/// Wt, Wy, T, Y; X feeds T and Y; Wt feeds Wy and Y; T and Wy feed Y.
CausalDag make_summary_dag();

// ---- trail machinery -------------------------------------------------------

/// All simple paths between a and b in the skeleton, as node sequences.
std::vector<std::vector<int>> all_simple_paths(const CausalDag& dag, int a, int b);

/// Standard blocking rule: some interior non-collider lies in z, or some
/// interior collider has neither itself nor a descendant in z.
bool path_blocked(const CausalDag& dag, const std::vector<int>& path,
                  const std::set<int>& z);

/// True when the first edge of the path points into path.front().
bool is_backdoor_path(const CausalDag& dag, const std::vector<int>& path);

/// Reachability-based d-separation of variable sets a and b given z.
/// Sets must be disjoint and name known variables.
bool d_separated(const CausalDag& dag, const std::set<std::string>& a,
                 const std::set<std::string>& b, const std::set<std::string>& z);

/// Exhaustive-enumeration d-separation; independent of the reachability
/// implementation and used to cross-check it.
bool d_separated_enum(const CausalDag& dag, const std::set<std::string>& a,
                      const std::set<std::string>& b, const std::set<std::string>& z);

struct IgnorabilityResult {
    bool mediator_outcome_blocked = false;   // condition 1G-1
    bool treatment_paths_blocked = false;    // condition 1G-2
};

/// Checks the two graphical sequential-ignorability conditions for candidate
/// adjustment set w on a dag with the given exposure/mediator/outcome roles.
/// Precondition: w excludes exposure, mediator, and outcome.
IgnorabilityResult verify_sequential_ignorability(const CausalDag& dag,
                                                  const std::set<std::string>& w,
                                                  const std::string& exposure = "Wt",
                                                  const std::string& mediator = "Wy",
                                                  const std::string& outcome = "Y");

/// One path from the adjustment-validity argument, with the set that is
/// supposed to block it.
struct ProofPath {
    std::vector<std::string> nodes;
    std::set<std::string> blocking_set;
    std::string label;
};

/// The backdoor paths of the summary graph grouped by which condition they
/// certify: three mediator-outcome paths (blocked by {Wx, Wt}), eight
/// exposure paths (blocked by {Wx}), and five self-treatment paths
/// (blocked by {X, Wx}).
std::vector<ProofPath> adjustment_proof_paths();

struct ProofPathCheck {
    ProofPath path;
    bool exists = false;    // every step is an edge of the dag
    bool backdoor = false;  // first edge points into the path head
    bool blocked = false;
};

std::vector<ProofPathCheck> check_adjustment_proof_paths(const CausalDag& dag);

// ---- discrete SCM ----------------------------------------------------------

/// Joint probability table over named finite variables.
class JointTable {
  public:
    JointTable(std::vector<std::string> names, std::vector<int> cards);

    int size() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<int>& cards() const { return cards_; }
    int index(const std::string& name) const;

    double& at(const std::vector<int>& assignment);
    double total() const;
    void normalize();

    /// P(fixed), summing over all unmentioned variables.
    double marginal(const std::map<std::string, int>& fixed) const;
    /// E[value-index of var | given]; throws OverlapViolation when the
    /// conditioning event has zero probability.
    double expectation(int var, const std::map<std::string, int>& given) const;
    double expectation(const std::string& var, const std::map<std::string, int>& given) const;

    /// Iterate all assignments; f(assignment, probability).
    template <typename F>
    void for_each(F&& f) const {
        std::vector<int> a(names_.size(), 0);
        for (std::size_t flat = 0; flat < p_.size(); ++flat) {
            f(a, p_[flat]);
            for (int v = size() - 1; v >= 0; --v) {
                if (++a[v] < cards_[v]) break;
                a[v] = 0;
            }
        }
    }

  private:
    std::size_t flat_index(const std::vector<int>& assignment) const;
    std::vector<std::string> names_;
    std::vector<int> cards_;
    std::vector<double> p_;
};

/// Markovian structural causal model with finite domains: one exogenous noise
/// per variable and deterministic mechanism tables.
struct DiscreteSCM {
    CausalDag dag;
    std::vector<int> card;                     // domain size per variable
    std::vector<int> noise_card;               // noise domain size per variable
    std::vector<std::vector<double>> noise_probs;
    // mechanism[v][pa_config * noise_card[v] + u] = value; pa_config is a
    // mixed-radix index over dag.parents(v) with the last parent fastest.
    std::vector<std::vector<int>> mechanism;

    void validate() const;

    int evaluate(int v, const std::vector<int>& values, int noise_value) const;
    /// Deterministic world: all endogenous values under the intervention.
    std::vector<int> world(const std::map<int, int>& forced,
                           const std::vector<int>& noise_config) const;

    /// P(v = value | parents), derived by summing the noise table.
    std::vector<std::vector<double>> conditional_tables() const;
    /// Observational joint over all variables.
    JointTable joint() const;
    /// One forward sample of all endogenous values.
    std::vector<int> sample(Rng& rng, const std::map<int, int>& forced = {}) const;

    std::string to_json() const;
    static DiscreteSCM from_json(const std::string& json_text);
};

/// Truncated factorization: joint over the non-intervened variables under
/// do(var = value) for each entry of the intervention map.
JointTable interventional_distribution(const DiscreteSCM& scm,
                                       const std::map<std::string, int>& do_values);

struct EffectQuery {
    int w_t = 0;        // baseline exposure level
    int w_t_prime = 1;  // contrasted exposure level
    int t = 0;          // baseline treatment level
    int t_prime = 1;    // contrasted treatment level
};

enum class PeerEffect { Direct, Indirect };

/// Exact nested counterfactual by exhaustive enumeration of all exogenous
/// noise configurations:
///   Direct:   E[Y(wt', Wy(wt')) - Y(wt, Wy(wt'))]
///   Indirect: E[Y(wt,  Wy(wt')) - Y(wt, Wy(wt))]
double nested_counterfactual_mean(const DiscreteSCM& scm, const EffectQuery& q,
                                  PeerEffect target);

/// E[Y | do(T = t')] - E[Y | do(T = t)] by enumeration; ground truth for the
/// self-treatment identification formula.
double interventional_ste(const DiscreteSCM& scm, const EffectQuery& q);

// Do-free identification formulas evaluated on the observational joint only.
// Conditioning events with zero probability raise OverlapViolation naming
// the event.
double identified_pde(const JointTable& joint, const EffectQuery& q);
double identified_pie(const JointTable& joint, const EffectQuery& q);
double identified_ste(const JointTable& joint, const EffectQuery& q);

/// Random SCM on the summary graph with strictly positive conditionals:
/// per variable, the noise domain matches the variable domain and each
/// parent configuration applies a random permutation to the noise value.
/// Cardinalities are drawn from {2, ..., max_card}.
DiscreteSCM random_summary_scm(int max_card, Rng& rng);

}  // namespace gdis

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace gdis {

/// Undirected graph over m nodes with per-node features, a binary treatment,
/// and (optionally, once simulated or loaded) a continuous outcome.
class Network {
  public:
    Network() = default;
    /// Edges are unordered index pairs; self-loops and duplicates are rejected.
    Network(int node_count, std::vector<std::pair<int, int>> edges,
            std::vector<std::vector<double>> features);

    int node_count() const { return node_count_; }
    int feature_dim() const { return feature_dim_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }

    const std::vector<std::pair<int, int>>& edges() const { return edges_; }
    const std::vector<std::vector<double>>& features() const { return features_; }
    const std::vector<double>& feature_row(int i) const;

    /// Sorted, deduplicated neighbor list of node i.
    const std::vector<int>& neighbors(int i) const;
    int degree(int i) const { return static_cast<int>(neighbors(i).size()); }

    bool has_treatments() const { return !treatments_.empty(); }
    bool has_outcomes() const { return outcomes_.has_value(); }
    const std::vector<int>& treatments() const;
    const std::vector<double>& outcomes() const;

    void set_treatments(std::vector<int> t);
    void set_outcomes(std::vector<double> y);
    void clear_outcomes() { outcomes_.reset(); }

  private:
    int node_count_ = 0;
    int feature_dim_ = 0;
    std::vector<std::pair<int, int>> edges_;          // normalized u < v
    std::vector<std::vector<int>> adjacency_;         // sorted per node
    std::vector<std::vector<double>> features_;
    std::vector<int> treatments_;
    std::optional<std::vector<double>> outcomes_;
};

/// Reads the edge list ("u v" per line, '#' comments allowed) and the
/// header-free numeric CSV of feature rows. The feature row count defines the
/// node count; parse and invariant failures report the offending line.
Network load_network(const std::string& edge_path, const std::string& feature_path);

/// As above, then attaches treatments (and outcomes when outcome_path is
/// non-empty) from one-value-per-line files. Length mismatches are errors.
Network load_network(const std::string& edge_path, const std::string& feature_path,
                     const std::string& treatment_path, const std::string& outcome_path);

void save_network(const Network& net, const std::string& edge_path,
                  const std::string& feature_path, const std::string& treatment_path,
                  const std::string& outcome_path);

enum class Part : std::uint8_t { Train = 0, Val = 1, Test = 2 };

struct Partition {
    std::vector<Part> assignment;
    std::array<double, 3> fractions{};
    std::uint64_t seed = 0;

    std::vector<int> indices_of(Part p) const;
    int size_of(Part p) const;
};

/// Deterministic balanced partition: target sizes by largest-remainder
/// apportionment, parts grown by seeded multi-source BFS so each part stays
/// locally clustered. Fractions must be nonnegative and sum to 1.
Partition partition_graph(const Network& net, const std::array<double, 3>& fractions,
                          std::uint64_t seed);

std::string partition_to_json(const Partition& part);
Partition partition_from_json(const std::string& json_text);

}  // namespace gdis

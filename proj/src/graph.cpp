#include "gdis/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gdis/common.hpp"

namespace gdis {

Network::Network(int node_count, std::vector<std::pair<int, int>> edges,
                 std::vector<std::vector<double>> features)
    : node_count_(node_count), features_(std::move(features)) {
    if (node_count_ <= 0) throw ValidationError("network must have at least one node");
    if (static_cast<int>(features_.size()) != node_count_)
        throw ValidationError("feature row count " + std::to_string(features_.size()) +
                              " does not match node count " + std::to_string(node_count_));
    feature_dim_ = features_.empty() ? 0 : static_cast<int>(features_[0].size());
    for (std::size_t r = 0; r < features_.size(); ++r)
        if (static_cast<int>(features_[r].size()) != feature_dim_)
            throw ValidationError("feature row " + std::to_string(r) + " has " +
                                  std::to_string(features_[r].size()) + " columns, expected " +
                                  std::to_string(feature_dim_));

    std::set<std::pair<int, int>> seen;
    adjacency_.assign(node_count_, {});
    for (auto [u, v] : edges) {
        if (u == v) throw ValidationError("self-loop at node " + std::to_string(u));
        if (u < 0 || v < 0 || u >= node_count_ || v >= node_count_)
            throw ValidationError("edge (" + std::to_string(u) + "," + std::to_string(v) +
                                  ") references a node index out of range [0," +
                                  std::to_string(node_count_ - 1) + "]");
        if (u > v) std::swap(u, v);
        if (!seen.insert({u, v}).second)
            throw ValidationError("duplicate edge (" + std::to_string(u) + "," +
                                  std::to_string(v) + ")");
    }
    edges_.assign(seen.begin(), seen.end());
    for (auto [u, v] : edges_) {
        adjacency_[u].push_back(v);
        adjacency_[v].push_back(u);
    }
    for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
}

const std::vector<double>& Network::feature_row(int i) const {
    if (i < 0 || i >= node_count_)
        throw ValidationError("node index " + std::to_string(i) + " out of range");
    return features_[i];
}

const std::vector<int>& Network::neighbors(int i) const {
    if (i < 0 || i >= node_count_)
        throw ValidationError("node index " + std::to_string(i) + " out of range [0," +
                              std::to_string(node_count_ - 1) + "]");
    return adjacency_[i];
}

const std::vector<int>& Network::treatments() const {
    if (treatments_.empty()) throw ValidationError("network has no treatments");
    return treatments_;
}

const std::vector<double>& Network::outcomes() const {
    if (!outcomes_) throw ValidationError("network has no outcomes");
    return *outcomes_;
}

void Network::set_treatments(std::vector<int> t) {
    if (static_cast<int>(t.size()) != node_count_)
        throw ValidationError("treatment vector length " + std::to_string(t.size()) +
                              " does not match node count " + std::to_string(node_count_));
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] != 0 && t[i] != 1)
            throw ValidationError("treatment at node " + std::to_string(i) +
                                  " must be 0 or 1, got " + std::to_string(t[i]));
    treatments_ = std::move(t);
}

void Network::set_outcomes(std::vector<double> y) {
    if (static_cast<int>(y.size()) != node_count_)
        throw ValidationError("outcome vector length " + std::to_string(y.size()) +
                              " does not match node count " + std::to_string(node_count_));
    outcomes_ = std::move(y);
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

bool blank_or_comment(const std::string& s) {
    for (char c : s) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

std::vector<double> parse_numeric_row(const std::string& line, const std::string& path,
                                      std::size_t line_no) {
    std::vector<double> row;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t pos = 0;
            double v = std::stod(cell, &pos);
            while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
            if (pos != cell.size()) throw std::invalid_argument(cell);
            row.push_back(v);
        } catch (const std::exception&) {
            throw ValidationError(path + " line " + std::to_string(line_no) +
                                  ": cannot parse numeric value '" + cell + "'");
        }
    }
    if (row.empty())
        throw ValidationError(path + " line " + std::to_string(line_no) + ": empty row");
    return row;
}

}  // namespace

Network load_network(const std::string& edge_path, const std::string& feature_path) {
    std::vector<std::vector<double>> features;
    {
        auto lines = read_lines(feature_path);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (blank_or_comment(lines[i])) continue;
            features.push_back(parse_numeric_row(lines[i], feature_path, i + 1));
        }
        if (features.empty()) throw ValidationError(feature_path + ": no feature rows");
    }
    const int m = static_cast<int>(features.size());

    std::vector<std::pair<int, int>> edges;
    {
        auto lines = read_lines(edge_path);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (blank_or_comment(lines[i])) continue;
            long u = -1, v = -1;
            char extra;
            std::istringstream ss(lines[i]);
            if (!(ss >> u >> v) || (ss >> extra))
                throw ValidationError(edge_path + " line " + std::to_string(i + 1) +
                                      ": expected 'u v', got '" + lines[i] + "'");
            if (u == v)
                throw ValidationError(edge_path + " line " + std::to_string(i + 1) +
                                      ": self-loop '" + lines[i] + "'");
            if (u < 0 || v < 0 || u >= m || v >= m)
                throw ValidationError(edge_path + " line " + std::to_string(i + 1) +
                                      ": edge references node " + std::to_string(std::max(u, v)) +
                                      " but " + feature_path + " has only " + std::to_string(m) +
                                      " rows (row-count mismatch)");
            edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
        }
    }

    // Duplicate detection with line attribution happens here, before the
    // Network constructor re-checks the invariants.
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < edges.size(); ++i) {
        auto [u, v] = edges[i];
        if (u > v) std::swap(u, v);
        if (!seen.insert({u, v}).second)
            throw ValidationError(edge_path + ": duplicate edge (" + std::to_string(u) + "," +
                                  std::to_string(v) + ")");
    }
    return Network(m, std::move(edges), std::move(features));
}

Network load_network(const std::string& edge_path, const std::string& feature_path,
                     const std::string& treatment_path, const std::string& outcome_path) {
    Network net = load_network(edge_path, feature_path);
    {
        auto lines = read_lines(treatment_path);
        std::vector<int> t;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (blank_or_comment(lines[i])) continue;
            auto row = parse_numeric_row(lines[i], treatment_path, i + 1);
            if (row.size() != 1)
                throw ValidationError(treatment_path + " line " + std::to_string(i + 1) +
                                      ": expected one value per line");
            t.push_back(static_cast<int>(row[0]));
        }
        if (static_cast<int>(t.size()) != net.node_count())
            throw ValidationError(treatment_path + ": row-count mismatch, " +
                                  std::to_string(t.size()) + " rows for " +
                                  std::to_string(net.node_count()) + " nodes");
        net.set_treatments(std::move(t));
    }
    if (!outcome_path.empty()) {
        auto lines = read_lines(outcome_path);
        std::vector<double> y;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (blank_or_comment(lines[i])) continue;
            auto row = parse_numeric_row(lines[i], outcome_path, i + 1);
            if (row.size() != 1)
                throw ValidationError(outcome_path + " line " + std::to_string(i + 1) +
                                      ": expected one value per line");
            y.push_back(row[0]);
        }
        if (static_cast<int>(y.size()) != net.node_count())
            throw ValidationError(outcome_path + ": row-count mismatch, " +
                                  std::to_string(y.size()) + " rows for " +
                                  std::to_string(net.node_count()) + " nodes");
        net.set_outcomes(std::move(y));
    }
    return net;
}

void save_network(const Network& net, const std::string& edge_path,
                  const std::string& feature_path, const std::string& treatment_path,
                  const std::string& outcome_path) {
    {
        std::ofstream out(edge_path);
        if (!out) throw ValidationError("cannot write " + edge_path);
        for (auto [u, v] : net.edges()) out << u << ' ' << v << '\n';
    }
    {
        std::ofstream out(feature_path);
        if (!out) throw ValidationError("cannot write " + feature_path);
        out.precision(17);
        for (const auto& row : net.features()) {
            for (std::size_t c = 0; c < row.size(); ++c)
                out << (c ? "," : "") << row[c];
            out << '\n';
        }
    }
    if (!treatment_path.empty() && net.has_treatments()) {
        std::ofstream out(treatment_path);
        if (!out) throw ValidationError("cannot write " + treatment_path);
        for (int t : net.treatments()) out << t << '\n';
    }
    if (!outcome_path.empty() && net.has_outcomes()) {
        std::ofstream out(outcome_path);
        if (!out) throw ValidationError("cannot write " + outcome_path);
        out.precision(17);
        for (double y : net.outcomes()) out << y << '\n';
    }
}

std::vector<int> Partition::indices_of(Part p) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < assignment.size(); ++i)
        if (assignment[i] == p) idx.push_back(static_cast<int>(i));
    return idx;
}

int Partition::size_of(Part p) const {
    int n = 0;
    for (Part a : assignment)
        if (a == p) ++n;
    return n;
}

namespace {

/// Largest-remainder apportionment of m seats to the three fractions.
std::array<int, 3> target_sizes(int m, const std::array<double, 3>& fractions) {
    std::array<int, 3> sizes{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int p = 0; p < 3; ++p) {
        double exact = fractions[p] * m;
        sizes[p] = static_cast<int>(exact);
        remainder[p] = exact - sizes[p];
        assigned += sizes[p];
    }
    while (assigned < m) {
        int best = 0;
        for (int p = 1; p < 3; ++p)
            if (remainder[p] > remainder[best]) best = p;
        sizes[best] += 1;
        remainder[best] = -1.0;
        ++assigned;
    }
    return sizes;
}

}  // namespace

Partition partition_graph(const Network& net, const std::array<double, 3>& fractions,
                          std::uint64_t seed) {
    double sum = fractions[0] + fractions[1] + fractions[2];
    for (double f : fractions)
        if (f < 0.0) throw ValidationError("partition fractions must be nonnegative");
    if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("partition fractions must sum to 1, got " + std::to_string(sum));

    const int m = net.node_count();
    auto sizes = target_sizes(m, fractions);
    for (int p = 0; p < 3; ++p)
        if (fractions[p] > 0.0 && sizes[p] == 0)
            throw ValidationError("degenerate fraction: part " + std::to_string(p) +
                                  " requested " + std::to_string(fractions[p]) +
                                  " but would receive no nodes at m=" + std::to_string(m));

    Partition part;
    part.fractions = fractions;
    part.seed = seed;

    auto grow = [&](std::uint64_t attempt_seed) {
        Rng rng(attempt_seed);
        std::vector<Part> assignment(m, Part::Train);
        std::vector<bool> assigned(m, false);
        std::vector<std::deque<int>> frontier(3);
        std::array<int, 3> remaining = sizes;
        int unassigned = m;

        auto grab = [&](int p, int node) {
            assignment[node] = static_cast<Part>(p);
            assigned[node] = true;
            --remaining[p];
            --unassigned;
            for (int nb : net.neighbors(node))
                if (!assigned[nb]) frontier[p].push_back(nb);
        };

        // Seed each nonempty part at a distinct random node.
        std::vector<int> order(m);
        for (int i = 0; i < m; ++i) order[i] = i;
        rng.shuffle(order);
        int cursor = 0;
        for (int p = 0; p < 3; ++p) {
            if (sizes[p] == 0) continue;
            while (cursor < m && assigned[order[cursor]]) ++cursor;
            grab(p, order[cursor]);
        }

        while (unassigned > 0) {
            // Grow the part with the largest relative deficit so small parts
            // keep pace and stay contiguous.
            int p = -1;
            double best = -1.0;
            for (int q = 0; q < 3; ++q) {
                if (remaining[q] == 0) continue;
                double rel = static_cast<double>(remaining[q]) / sizes[q];
                if (rel > best) {
                    best = rel;
                    p = q;
                }
            }
            int node = -1;
            while (!frontier[p].empty()) {
                int cand = frontier[p].front();
                frontier[p].pop_front();
                if (!assigned[cand]) {
                    node = cand;
                    break;
                }
            }
            if (node < 0) {
                // Frontier exhausted (disconnected or surrounded): jump to
                // the lowest-index unassigned node.
                for (int i = 0; i < m; ++i)
                    if (!assigned[i]) {
                        node = i;
                        break;
                    }
            }
            grab(p, node);
        }
        return assignment;
    };

    auto parts_internally_connected = [&](const std::vector<Part>& assignment) {
        std::array<bool, 3> has_edge{false, false, false};
        for (auto [u, v] : net.edges())
            if (assignment[u] == assignment[v]) has_edge[static_cast<int>(assignment[u])] = true;
        for (int p = 0; p < 3; ++p)
            if (sizes[p] >= 2 && !has_edge[p]) return false;
        return true;
    };

    part.assignment = grow(seed);
    for (int attempt = 1; attempt < 8 && !parts_internally_connected(part.assignment); ++attempt)
        part.assignment = grow(splitmix64(seed ^ (0x51ed2701ULL * attempt)));
    return part;
}

std::string partition_to_json(const Partition& part) {
    nlohmann::json j;
    std::vector<int> a(part.assignment.size());
    for (std::size_t i = 0; i < part.assignment.size(); ++i)
        a[i] = static_cast<int>(part.assignment[i]);
    j["assignment"] = a;
    j["fractions"] = part.fractions;
    j["seed"] = part.seed;
    return j.dump(2);
}

Partition partition_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    Partition part;
    part.seed = j.at("seed").get<std::uint64_t>();
    auto fr = j.at("fractions").get<std::vector<double>>();
    if (fr.size() != 3) throw ValidationError("partition json: fractions must have 3 entries");
    part.fractions = {fr[0], fr[1], fr[2]};
    for (int v : j.at("assignment").get<std::vector<int>>()) {
        if (v < 0 || v > 2) throw ValidationError("partition json: assignment value out of range");
        part.assignment.push_back(static_cast<Part>(v));
    }
    return part;
}

}  // namespace gdis

#include "pertrl/env/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "pertrl/util/errors.hpp"
#include "pertrl/util/rng.hpp"

namespace pertrl::env {

std::string to_string(Modality m) {
    switch (m) {
        case Modality::RNA: return "RNA";
        case Modality::ATAC: return "ATAC";
        case Modality::JOINT: return "JOINT";
    }
    return "RNA";
}

Modality modality_from_string(const std::string& s) {
    std::string u = s;
    for (auto& c : u) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    if (u == "RNA") return Modality::RNA;
    if (u == "ATAC") return Modality::ATAC;
    if (u == "JOINT") return Modality::JOINT;
    throw ConfigError("unknown modality: " + s);
}

std::vector<int> ExpressionDataset::cells_in(Split s) const {
    std::vector<int> out;
    for (int i = 0; i < n_cells(); ++i)
        if (split[static_cast<std::size_t>(i)] == s) out.push_back(i);
    return out;
}

void ExpressionDataset::validate() const {
    const int cells = n_cells();
    if (static_cast<int>(cell_ids.size()) != cells ||
        static_cast<int>(split.size()) != cells || pseudotime.size() != cells)
        throw DataError("dataset: per-cell field lengths disagree");
    if (static_cast<int>(gene_names.size()) != n_genes())
        throw DataError("dataset: gene name count disagrees with matrix columns");
    for (int r = 0; r < cells; ++r) {
        for (int c = 0; c < n_genes(); ++c)
            if (!std::isfinite(matrix(r, c)))
                throw DataError("dataset: non-finite value at cell " + cell_ids[r] +
                                ", gene " + gene_names[static_cast<std::size_t>(c)]);
        if (!(pseudotime(r) >= 0.0 && pseudotime(r) <= 1.0))
            throw DataError("dataset: pseudotime out of [0,1] for cell " + cell_ids[r]);
    }
    std::unordered_set<std::string> seen;
    for (const auto& id : cell_ids)
        if (!seen.insert(id).second) throw DataError("dataset: duplicate cell id " + id);
}

void save_dataset(const ExpressionDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_dataset: cannot open " + path);
    os << "#pertrl-dataset\tv1\tmodality=" << to_string(ds.modality) << "\n";
    os << "cell_id\tpseudotime\tsplit";
    for (const auto& g : ds.gene_names) os << '\t' << g;
    os << '\n';
    os.precision(17);
    for (int r = 0; r < ds.n_cells(); ++r) {
        os << ds.cell_ids[static_cast<std::size_t>(r)] << '\t' << ds.pseudotime(r)
           << '\t' << (ds.split[static_cast<std::size_t>(r)] == Split::TRAIN ? "TRAIN" : "TEST");
        for (int c = 0; c < ds.n_genes(); ++c) os << '\t' << ds.matrix(r, c);
        os << '\n';
    }
}

ExpressionDataset load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("load_dataset: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw DataError("load_dataset: empty file " + path);

    std::vector<std::string> head;
    {
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, '\t')) head.push_back(tok);
    }
    if (head.size() < 3 || head[0] != "#pertrl-dataset" || head[1] != "v1" ||
        head[2].rfind("modality=", 0) != 0)
        throw DataError("load_dataset: bad header line in " + path);
    ExpressionDataset ds;
    ds.modality = modality_from_string(head[2].substr(9));

    if (!std::getline(is, line)) throw DataError("load_dataset: missing column header");
    {
        std::istringstream ss(line);
        std::string tok;
        std::vector<std::string> cols;
        while (std::getline(ss, tok, '\t')) cols.push_back(tok);
        if (cols.size() < 4 || cols[0] != "cell_id" || cols[1] != "pseudotime" ||
            cols[2] != "split")
            throw DataError("load_dataset: bad column header (expected cell_id, "
                            "pseudotime, split, genes...)");
        ds.gene_names.assign(cols.begin() + 3, cols.end());
    }

    const int n_genes = static_cast<int>(ds.gene_names.size());
    std::vector<Eigen::VectorXd> rows;
    std::vector<double> pt;
    int lineno = 2;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, pts, splits;
        if (!std::getline(ss, id, '\t') || !std::getline(ss, pts, '\t') ||
            !std::getline(ss, splits, '\t'))
            throw DataError("load_dataset: malformed row at line " +
                            std::to_string(lineno));
        Eigen::VectorXd row(n_genes);
        std::string tok;
        for (int c = 0; c < n_genes; ++c) {
            if (!std::getline(ss, tok, '\t'))
                throw DataError("load_dataset: line " + std::to_string(lineno) +
                                ": expected " + std::to_string(n_genes) +
                                " gene values, got " + std::to_string(c));
            try {
                row(c) = std::stod(tok);
            } catch (const std::exception&) {
                throw DataError("load_dataset: line " + std::to_string(lineno) +
                                ", gene " + ds.gene_names[static_cast<std::size_t>(c)] +
                                ": not a number: " + tok);
            }
        }
        if (std::getline(ss, tok, '\t'))
            throw DataError("load_dataset: line " + std::to_string(lineno) +
                            ": trailing fields");
        if (splits != "TRAIN" && splits != "TEST")
            throw DataError("load_dataset: line " + std::to_string(lineno) +
                            ": split must be TRAIN or TEST, got " + splits);
        ds.cell_ids.push_back(id);
        ds.split.push_back(splits == "TRAIN" ? Split::TRAIN : Split::TEST);
        try {
            pt.push_back(std::stod(pts));
        } catch (const std::exception&) {
            throw DataError("load_dataset: line " + std::to_string(lineno) +
                            ": bad pseudotime: " + pts);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("load_dataset: no data rows in " + path);
    ds.matrix.resize(static_cast<int>(rows.size()), n_genes);
    ds.pseudotime.resize(static_cast<int>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        ds.matrix.row(static_cast<int>(r)) = rows[r].transpose();
        ds.pseudotime(static_cast<int>(r)) = pt[r];
    }
    ds.validate();
    return ds;
}

ExpressionDataset fuse_joint(const ExpressionDataset& rna,
                             const ExpressionDataset& atac) {
    if (rna.n_cells() != atac.n_cells())
        throw DataError("fuse_joint: cell counts differ (" +
                        std::to_string(rna.n_cells()) + " vs " +
                        std::to_string(atac.n_cells()) + ")");
    for (int i = 0; i < rna.n_cells(); ++i) {
        const auto& a = rna.cell_ids[static_cast<std::size_t>(i)];
        const auto& b = atac.cell_ids[static_cast<std::size_t>(i)];
        if (a != b)
            throw DataError("fuse_joint: misaligned cell ids at row " +
                            std::to_string(i) + " (" + a + " vs " + b + ")");
        if (rna.split[static_cast<std::size_t>(i)] != atac.split[static_cast<std::size_t>(i)])
            throw DataError("fuse_joint: split assignment differs for cell " + a);
    }
    ExpressionDataset out;
    out.modality = Modality::JOINT;
    out.cell_ids = rna.cell_ids;
    out.split = rna.split;
    out.pseudotime = rna.pseudotime;
    out.matrix.resize(rna.n_cells(), rna.n_genes() + atac.n_genes());
    out.matrix << rna.matrix, atac.matrix;
    out.gene_names = rna.gene_names;
    for (const auto& g : atac.gene_names) out.gene_names.push_back("atac:" + g);
    out.validate();
    return out;
}

void save_network(const RegulatoryNetwork& net, const std::string& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw DataError("save_network: cannot open " + path);
    os << "#pertrl-regnet\tv1\t" << net.n_genes() << "\n";
    os.precision(17);
    for (int i = 0; i < net.n_genes(); ++i)
        for (int j = 0; j < net.n_genes(); ++j)
            if (net.effects(i, j) != 0.0)
                os << i << '\t' << j << '\t' << net.effects(i, j) << '\n';
}

RegulatoryNetwork load_network(const std::string& path, int n_genes) {
    std::ifstream is(path);
    if (!is) throw DataError("load_network: cannot open " + path);
    std::string line;
    if (!std::getline(is, line) || line.rfind("#pertrl-regnet\tv1\t", 0) != 0)
        throw DataError("load_network: bad header in " + path);
    const int declared = std::stoi(line.substr(line.rfind('\t') + 1));
    if (n_genes > 0 && declared != n_genes)
        throw DataError("load_network: gene count mismatch (file " +
                        std::to_string(declared) + ", expected " +
                        std::to_string(n_genes) + ")");
    RegulatoryNetwork net{Eigen::MatrixXd::Zero(declared, declared)};
    int i, j;
    double w;
    while (is >> i >> j >> w) {
        if (i < 0 || i >= declared || j < 0 || j >= declared)
            throw DataError("load_network: index out of range in " + path);
        net.effects(i, j) = w;
    }
    return net;
}

RegulatoryNetwork block_diag(const RegulatoryNetwork& a, const RegulatoryNetwork& b) {
    const int n = a.n_genes() + b.n_genes();
    RegulatoryNetwork out{Eigen::MatrixXd::Zero(n, n)};
    out.effects.topLeftCorner(a.n_genes(), a.n_genes()) = a.effects;
    out.effects.bottomRightCorner(b.n_genes(), b.n_genes()) = b.effects;
    return out;
}

SyntheticData synthesize_dataset(std::uint64_t seed, int n_cells, int n_genes,
                                 double regulatory_density, Modality modality) {
    if (n_cells < 1 || n_genes < 1)
        throw ConfigError("synthesize_dataset: sizes must be >= 1");
    if (regulatory_density < 0.0 || regulatory_density > 1.0)
        throw ConfigError("synthesize_dataset: density must be in [0,1]");

    util::Rng rng(util::mix_seed(seed, 0x73796e7468ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    SyntheticData out;
    out.dataset.modality = modality;
    out.dataset.matrix.resize(n_cells, n_genes);
    out.dataset.pseudotime.resize(n_cells);
    // Log-normal baselines; interpreted as log-normalized expression units.
    for (int r = 0; r < n_cells; ++r) {
        for (int c = 0; c < n_genes; ++c)
            out.dataset.matrix(r, c) = std::exp(0.3 + 0.5 * normal(rng));
        out.dataset.pseudotime(r) = uniform(rng);
    }
    for (int c = 0; c < n_genes; ++c)
        out.dataset.gene_names.push_back("g" + std::to_string(c));
    // Exact 80/20 partition, both splits non-empty whenever possible.
    int n_test = n_cells / 5;
    if (n_cells >= 2) n_test = std::clamp(n_test, 1, n_cells - 1);
    for (int r = 0; r < n_cells; ++r) {
        out.dataset.cell_ids.push_back("cell" + std::to_string(r));
        out.dataset.split.push_back(r < n_cells - n_test ? Split::TRAIN : Split::TEST);
    }

    RegulatoryNetwork& net = out.network;
    net.effects = Eigen::MatrixXd::Zero(n_genes, n_genes);
    for (int i = 0; i < n_genes; ++i)
        for (int j = 0; j < n_genes; ++j)
            if (i != j && uniform(rng) < regulatory_density)
                net.effects(i, j) = 0.3 * normal(rng);

    out.dataset.validate();
    return out;
}

}  // namespace pertrl::env

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace pertrl::env {

enum class Modality { RNA, ATAC, JOINT };
enum class Split { TRAIN, TEST };

std::string to_string(Modality m);
Modality modality_from_string(const std::string& s);

// Cells x genes expression (or accessibility) matrix with per-cell
// pseudotime and train/test split assignment.
struct ExpressionDataset {
    Eigen::MatrixXd matrix;  // cells x genes
    std::vector<std::string> gene_names;
    std::vector<std::string> cell_ids;
    Modality modality = Modality::RNA;
    Eigen::VectorXd pseudotime;  // per cell, in [0,1]
    std::vector<Split> split;

    int n_cells() const { return static_cast<int>(matrix.rows()); }
    int n_genes() const { return static_cast<int>(matrix.cols()); }
    std::vector<int> cells_in(Split s) const;
    void validate() const;
};

// Sparse linear gene-regulatory effect matrix: entry (i, j) is the shift of
// gene i per unit direct change of gene j.
struct RegulatoryNetwork {
    Eigen::MatrixXd effects;  // genes x genes, zero diagonal

    int n_genes() const { return static_cast<int>(effects.rows()); }
};

struct SyntheticData {
    ExpressionDataset dataset;
    RegulatoryNetwork network;
};

// Header-tagged TSV: "#pertrl-dataset<TAB>v1<TAB>modality=..." then
// "cell_id pseudotime split <gene...>" then one row per cell.
void save_dataset(const ExpressionDataset& ds, const std::string& path);
ExpressionDataset load_dataset(const std::string& path);

// Column-concatenation of two modalities over the same (aligned) cell set.
ExpressionDataset fuse_joint(const ExpressionDataset& rna,
                             const ExpressionDataset& atac);

// Sidecar regulatory-network file ("#pertrl-regnet v1", sparse triplets).
void save_network(const RegulatoryNetwork& net, const std::string& path);
RegulatoryNetwork load_network(const std::string& path, int n_genes);
RegulatoryNetwork block_diag(const RegulatoryNetwork& a, const RegulatoryNetwork& b);

// Deterministic synthetic data: log-normal baselines, sparse random W,
// uniform pseudotime, 80/20 train/test split.
SyntheticData synthesize_dataset(std::uint64_t seed, int n_cells, int n_genes,
                                 double regulatory_density,
                                 Modality modality = Modality::RNA);

}  // namespace pertrl::env

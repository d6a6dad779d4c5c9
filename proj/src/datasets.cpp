// Copyright 2026-present the noisestab project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nstab/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace nstab {

namespace {

std::string seed_tag(std::uint64_t s) { return std::to_string(s); }

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off, const char* file,
                        const char* field) {
    if (off + 4 > buf.size()) {
        throw FormatError(std::string(file) + ": truncated before " + field);
    }
    return (std::uint32_t{buf[off]} << 24) | (std::uint32_t{buf[off + 1]} << 16) |
           (std::uint32_t{buf[off + 2]} << 8) | std::uint32_t{buf[off + 3]};
}

bool parse_double(const std::string& s, double& out) {
    std::size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return pos == s.size() && std::isfinite(out);
}

}  // namespace

Dataset Dataset::subset(const IndexList& idx) const {
    Dataset out;
    out.task = task;
    out.num_classes = num_classes;
    out.provenance = provenance;
    out.inputs.resize(static_cast<Eigen::Index>(idx.size()), inputs.cols());
    if (task == TaskKind::Regression) out.targets.resize(out.inputs.rows(), targets.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto src = static_cast<Eigen::Index>(idx[i]);
        const auto dst = static_cast<Eigen::Index>(i);
        out.inputs.row(dst) = inputs.row(src);
        if (task == TaskKind::Classification) {
            out.labels.push_back(labels[idx[i]]);
        } else {
            out.targets.row(dst) = targets.row(src);
        }
    }
    return out;
}

Matrix Dataset::target_matrix() const {
    if (task == TaskKind::Regression) return targets;
    Matrix y = Matrix::Zero(inputs.rows(), num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) y(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
    return y;
}

void Dataset::validate() const {
    if (task == TaskKind::Classification) {
        if (labels.size() != size()) throw DataError("dataset: label count differs from inputs");
        for (int c : labels) {
            if (c < 0 || c >= num_classes) throw DataError("dataset: class index out of range");
        }
    } else if (targets.rows() != inputs.rows()) {
        throw DataError("dataset: target count differs from inputs");
    }
    if (!inputs.allFinite()) throw DataError("dataset: non-finite input value");
}

Matrix blob_centers(int classes, int dim, std::uint64_t centers_seed, double center_spread) {
    Rng rng(centers_seed);
    std::uniform_real_distribution<double> box(-center_spread, center_spread);
    Matrix centers(classes, dim);
    for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = box(rng);
    return centers;
}

Dataset gen_blobs(int n_per_class, int classes, int dim, std::uint64_t centers_seed,
                  double noise_std, std::uint64_t seed, double center_spread) {
    if (classes < 2) throw InvalidArgument("gen_blobs: need at least 2 classes");
    if (dim < 1) throw InvalidArgument("gen_blobs: dim must be >= 1");
    if (!(noise_std >= 0.0)) throw InvalidArgument("gen_blobs: noise_std must be >= 0");
    const Matrix centers = blob_centers(classes, dim, centers_seed, center_spread);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.task = TaskKind::Classification;
    d.num_classes = classes;
    d.inputs.resize(static_cast<Eigen::Index>(n_per_class) * classes, dim);
    Eigen::Index r = 0;
    for (int c = 0; c < classes; ++c) {
        for (int i = 0; i < n_per_class; ++i, ++r) {
            for (int j = 0; j < dim; ++j) d.inputs(r, j) = centers(c, j) + noise_std * normal(rng);
            d.labels.push_back(c);
        }
    }
    d.provenance = "blobs(n_per_class=" + std::to_string(n_per_class) +
                   ",classes=" + std::to_string(classes) + ",dim=" + std::to_string(dim) +
                   ",centers_seed=" + seed_tag(centers_seed) + ",seed=" + seed_tag(seed) + ")";
    return d;
}

Dataset gen_two_moons(int n, double noise_std, std::uint64_t seed) {
    if (n < 2) throw InvalidArgument("gen_two_moons: n must be >= 2");
    const int n_outer = n / 2;
    const int n_inner = n - n_outer;
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.task = TaskKind::Classification;
    d.num_classes = 2;
    d.inputs.resize(n, 2);
    auto angle = [](int i, int count) {
        return count > 1 ? std::numbers::pi * i / (count - 1) : 0.0;
    };
    for (int i = 0; i < n_outer; ++i) {
        const double t = angle(i, n_outer);
        d.inputs(i, 0) = std::cos(t);
        d.inputs(i, 1) = std::sin(t);
        d.labels.push_back(0);
    }
    for (int i = 0; i < n_inner; ++i) {
        const double t = angle(i, n_inner);
        d.inputs(n_outer + i, 0) = 1.0 - std::cos(t);
        d.inputs(n_outer + i, 1) = 0.5 - std::sin(t);
        d.labels.push_back(1);
    }
    if (noise_std > 0.0) {
        for (Eigen::Index i = 0; i < d.inputs.size(); ++i) d.inputs.data()[i] += noise_std * normal(rng);
    }
    d.provenance = "two_moons(n=" + std::to_string(n) + ",seed=" + seed_tag(seed) + ")";
    return d;
}

Vector linear_regression_weights(int dim, std::uint64_t weight_seed) {
    Rng rng(weight_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector w(dim);
    for (int j = 0; j < dim; ++j) w[j] = normal(rng);
    return w;
}

Dataset gen_linear_regression(int n, int dim, std::uint64_t weight_seed, double noise_std,
                              std::uint64_t seed) {
    if (dim < 1) throw InvalidArgument("gen_linear_regression: dim must be >= 1");
    const Vector w = linear_regression_weights(dim, weight_seed);
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset d;
    d.task = TaskKind::Regression;
    d.inputs.resize(n, dim);
    d.targets.resize(n, 1);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < dim; ++j) d.inputs(i, j) = normal(rng);
        d.targets(i, 0) = d.inputs.row(i).dot(w) + noise_std * normal(rng);
    }
    d.provenance = "linear_regression(n=" + std::to_string(n) + ",dim=" + std::to_string(dim) +
                   ",weight_seed=" + seed_tag(weight_seed) + ",seed=" + seed_tag(seed) + ")";
    return d;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
    const auto img = read_all(images_path);
    const auto lab = read_all(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0, "images", "magic");
    if (img_magic != 0x00000803u) throw FormatError("images: bad magic number");
    const std::uint32_t count = read_be32(img, 4, "images", "image count");
    const std::uint32_t rows = read_be32(img, 8, "images", "row count");
    const std::uint32_t cols = read_be32(img, 12, "images", "column count");

    const std::uint32_t lab_magic = read_be32(lab, 0, "labels", "magic");
    if (lab_magic != 0x00000801u) throw FormatError("labels: bad magic number");
    const std::uint32_t lab_count = read_be32(lab, 4, "labels", "label count");
    if (lab_count != count) {
        throw FormatError("labels: label count " + std::to_string(lab_count) +
                          " differs from image count " + std::to_string(count));
    }

    const std::size_t pixels = std::size_t{rows} * cols;
    if (img.size() < 16 + pixels * count) throw FormatError("images: truncated pixel data");
    if (lab.size() < 8 + std::size_t{count}) throw FormatError("labels: truncated label data");

    Dataset d;
    d.task = TaskKind::Classification;
    d.inputs.resize(count, static_cast<Eigen::Index>(pixels));
    int max_label = -1;
    for (std::uint32_t i = 0; i < count; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) {
            d.inputs(i, static_cast<Eigen::Index>(p)) = img[16 + i * pixels + p] / 255.0;
        }
        const int y = lab[8 + i];
        max_label = std::max(max_label, y);
        d.labels.push_back(y);
    }
    d.num_classes = std::max(10, max_label + 1);
    d.provenance = "idx(" + images_path.filename().string() + "," + labels_path.filename().string() + ")";
    return d;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable table;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    auto end_row = [&]() {
        row.push_back(std::move(field));
        field.clear();
        if (table.header.empty()) {
            table.header = std::move(row);
        } else if (!(row.size() == 1 && row[0].empty())) {
            table.rows.push_back(std::move(row));
        }
        row.clear();
        any = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
            continue;
        }
        any = true;
        if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (quoted) throw FormatError("csv: unterminated quoted field");
    if (any || !field.empty() || !row.empty()) end_row();
    if (table.header.empty()) throw FormatError("csv: missing header row");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        if (table.rows[r].size() != table.header.size()) {
            throw FormatError("csv: row " + std::to_string(r + 1) + " has " +
                              std::to_string(table.rows[r].size()) + " fields, header has " +
                              std::to_string(table.header.size()));
        }
    }
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str());
}

std::vector<std::size_t> TabularEncoder::locate(const CsvTable& table) const {
    if (schema_.size() != table.header.size()) {
        throw DataError("csv: schema covers " + std::to_string(schema_.size()) + " of " +
                        std::to_string(table.header.size()) + " columns");
    }
    std::vector<std::size_t> where;
    for (const auto& [name, kind] : schema_) {
        auto it = std::find(table.header.begin(), table.header.end(), name);
        if (it == table.header.end()) throw DataError("csv: schema column '" + name + "' missing");
        where.push_back(static_cast<std::size_t>(it - table.header.begin()));
    }
    return where;
}

void TabularEncoder::fit(const CsvTable& table) {
    const auto where = locate(table);
    columns_.clear();
    target_classes_.clear();
    int targets = 0;
    for (std::size_t s = 0; s < schema_.size(); ++s) {
        Column col{schema_[s].first, schema_[s].second, where[s], {}, 0.0, 1.0};
        if (col.kind == ColumnKind::Target) ++targets;
        const bool categorical = col.kind == ColumnKind::Categorical ||
                                 (col.kind == ColumnKind::Target && task_ == TaskKind::Classification);
        if (categorical) {
            auto& cats = col.kind == ColumnKind::Target ? target_classes_ : col.categories;
            for (const auto& row : table.rows) {
                const auto& v = row[col.source];
                if (std::find(cats.begin(), cats.end(), v) == cats.end()) cats.push_back(v);
            }
        } else if (col.kind == ColumnKind::Numeric) {
            double sum = 0.0;
            double sq = 0.0;
            for (std::size_t r = 0; r < table.rows.size(); ++r) {
                double v = 0.0;
                if (!parse_double(table.rows[r][col.source], v)) {
                    throw DataError("csv: non-numeric value '" + table.rows[r][col.source] +
                                    "' at row " + std::to_string(r + 1) + ", column '" + col.name + "'");
                }
                sum += v;
                sq += v * v;
            }
            const auto n = static_cast<double>(std::max<std::size_t>(table.rows.size(), 1));
            col.mean = sum / n;
            const double var = std::max(sq / n - col.mean * col.mean, 0.0);
            col.scale = var > 0.0 ? std::sqrt(var) : 1.0;
        }
        columns_.push_back(std::move(col));
    }
    if (targets != 1) throw DataError("csv: schema needs exactly one target column");
    fitted_ = true;
}

Eigen::Index TabularEncoder::feature_dim() const {
    Eigen::Index d = 0;
    for (const auto& c : columns_) {
        if (c.kind == ColumnKind::Numeric) d += 1;
        if (c.kind == ColumnKind::Categorical) d += static_cast<Eigen::Index>(c.categories.size());
    }
    return d;
}

Dataset TabularEncoder::transform(const CsvTable& table) const {
    if (!fitted_) throw InvalidState("TabularEncoder: transform before fit");
    const auto where = locate(table);
    Dataset d;
    d.task = task_;
    d.num_classes = task_ == TaskKind::Classification ? static_cast<int>(target_classes_.size()) : 0;
    const auto n = static_cast<Eigen::Index>(table.rows.size());
    d.inputs = Matrix::Zero(n, feature_dim());
    if (task_ == TaskKind::Regression) d.targets.resize(n, 1);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = table.rows[static_cast<std::size_t>(r)];
        Eigen::Index c = 0;
        for (std::size_t s = 0; s < columns_.size(); ++s) {
            const Column& col = columns_[s];
            const std::string& raw = row[where[s]];
            auto fail = [&](const std::string& what) {
                return DataError("csv: " + what + " '" + raw + "' at row " + std::to_string(r + 1) +
                                 ", column '" + col.name + "'");
            };
            switch (col.kind) {
                case ColumnKind::Numeric: {
                    double v = 0.0;
                    if (!parse_double(raw, v)) throw fail("non-numeric value");
                    d.inputs(r, c++) = (v - col.mean) / col.scale;
                    break;
                }
                case ColumnKind::Categorical: {
                    auto it = std::find(col.categories.begin(), col.categories.end(), raw);
                    if (it == col.categories.end()) throw fail("unseen category");
                    d.inputs(r, c + (it - col.categories.begin())) = 1.0;
                    c += static_cast<Eigen::Index>(col.categories.size());
                    break;
                }
                case ColumnKind::Target: {
                    if (task_ == TaskKind::Classification) {
                        auto it = std::find(target_classes_.begin(), target_classes_.end(), raw);
                        if (it == target_classes_.end()) throw fail("unseen class");
                        d.labels.push_back(static_cast<int>(it - target_classes_.begin()));
                    } else {
                        double v = 0.0;
                        if (!parse_double(raw, v)) throw fail("non-numeric target");
                        d.targets(r, 0) = v;
                    }
                    break;
                }
            }
        }
    }
    d.provenance = "csv";
    return d;
}

Dataset load_csv_tabular(const std::filesystem::path& path, const CsvSchema& schema,
                         TaskKind task) {
    const CsvTable table = read_csv(path);
    TabularEncoder enc(schema, task);
    enc.fit(table);
    Dataset d = enc.transform(table);
    d.provenance = "csv(" + path.filename().string() + ")";
    return d;
}

SplitResult split(const Dataset& data, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw InvalidArgument("split: test_fraction must be in (0, 1)");
    }
    Rng rng(seed);
    SplitResult out;
    auto cut = [&](IndexList idx) {
        std::shuffle(idx.begin(), idx.end(), rng);
        const auto n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(idx.size())));
        out.test_idx.insert(out.test_idx.end(), idx.begin(), idx.begin() + static_cast<long>(n_test));
        out.train_idx.insert(out.train_idx.end(), idx.begin() + static_cast<long>(n_test), idx.end());
    };
    if (data.task == TaskKind::Classification) {
        std::vector<IndexList> by_class(static_cast<std::size_t>(data.num_classes));
        for (std::size_t i = 0; i < data.labels.size(); ++i) {
            by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
        }
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            if (by_class[c].empty()) continue;
            if (by_class[c].size() < 2) {
                throw DataError("split: class " + std::to_string(c) + " has fewer than 2 members");
            }
            cut(std::move(by_class[c]));
        }
    } else {
        IndexList all(data.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        cut(std::move(all));
    }
    std::sort(out.train_idx.begin(), out.train_idx.end());
    std::sort(out.test_idx.begin(), out.test_idx.end());
    out.train = data.subset(out.train_idx);
    out.test = data.subset(out.test_idx);
    return out;
}

Standardizer Standardizer::fit(const Eigen::Ref<const Matrix>& x) {
    Standardizer s;
    const auto n = static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
    s.mean = x.colwise().sum() / n;
    const Matrix centered = x.rowwise() - s.mean;
    s.scale = (centered.colwise().squaredNorm() / n).cwiseSqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j) {
        if (!(s.scale[j] > 0.0)) s.scale[j] = 1.0;
    }
    return s;
}

Matrix Standardizer::apply(const Eigen::Ref<const Matrix>& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
}

}  // namespace nstab

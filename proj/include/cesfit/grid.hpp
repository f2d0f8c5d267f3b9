#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cesfit/detail/text.hpp"
#include "cesfit/lm.hpp"

namespace cesfit {

struct RhoGridSegment {
    double start;
    double stop;
    double step;  // > 0
};

/// Candidate substitution-parameter values as (start, stop, step) segments.
struct RhoGrid {
    std::vector<RhoGridSegment> segments;
};

/// The two preselected grids, as (start, stop, step) triples.
inline RhoGrid rho_vec1() {
    return {{{-0.9, 1.25, 0.64}, {1.68, 1.72, 0.88}, {1.86, 10.00, 0.94}}};
}
inline RhoGrid rho_vec2() {
    return {{{-1.0, 1.0, 0.40}, {1.68, 2.00, 0.64}, {10.00, 11.51, 0.88}}};
}

/// Union of all segment lattices {start, start+step, ...}, each clipped at
/// stop (included when a lattice point lands within 1e-9 of it), sorted
/// ascending with duplicates within 1e-12 merged.
inline std::vector<double> expand_grid(const RhoGrid& grid) {
    std::vector<double> values;
    for (const auto& seg : grid.segments) {
        if (!(seg.step > 0.0) || !(seg.start <= seg.stop))
            throw std::invalid_argument("grid segment requires start <= stop and step > 0");
        for (std::size_t k = 0;; ++k) {
            const double v = seg.start + static_cast<double>(k) * seg.step;
            if (v > seg.stop + 1e-9) break;
            values.push_back(v);
        }
    }
    if (values.empty()) throw EmptyGrid("grid expansion is empty");
    std::sort(values.begin(), values.end());
    std::vector<double> unique;
    unique.reserve(values.size());
    for (const double v : values)
        if (unique.empty() || v - unique.back() > 1e-12) unique.push_back(v);
    return unique;
}

enum class SigmaSource { Outer, Inner };

/// Per-cell initialization policy. WarmStart seeds each cell from the best
/// already-completed neighbor in the deterministic row-major scan and must
/// run sequentially; Independent seeds every cell identically and is safe to
/// parallelize without changing any result.
enum class CellInit { WarmStart, Independent };

struct SurfaceCell {
    LmStatus status = LmStatus::InadmissibleStart;
    std::optional<double> neg_ssr;  // empty iff no admissible fit at this cell
    double efficiency_a = std::numeric_limits<double>::quiet_NaN();
    double share_delta = std::numeric_limits<double>::quiet_NaN();
    double share_delta1 = std::numeric_limits<double>::quiet_NaN();

    bool missing() const { return !neg_ssr.has_value(); }
};

/// Negative sum-of-squared-residuals over the (rho1, rho) lattice,
/// rho1-major: cell (i, j) pairs rho1_values[i] with rho_values[j].
struct SsrSurface {
    std::vector<double> rho1_values;  // sorted ascending
    std::vector<double> rho_values;   // sorted ascending
    std::vector<SurfaceCell> cells;   // row-major, size = |rho1| * |rho|

    const SurfaceCell& cell(std::size_t rho1_index, std::size_t rho_index) const {
        return cells[rho1_index * rho_values.size() + rho_index];
    }
    SurfaceCell& cell(std::size_t rho1_index, std::size_t rho_index) {
        return cells[rho1_index * rho_values.size() + rho_index];
    }
};

struct GridSelection {
    std::size_t rho1_index = 0;
    std::size_t rho_index = 0;
    double rho1 = 0.0;
    double rho = 0.0;
    LmOutcome outcome;
};

struct GridFitResult {
    GridSelection best_unconstrained;                 // minimum RSS over all cells
    std::optional<GridSelection> best_reasonable;     // minimum RSS with sigma in [0, 1]
    SsrSurface surface;
};

namespace detail {

/// Default per-cell start: shares at 0.5 (always admissible) and A scaled so
/// the mean prediction matches the mean output.
inline CesParams default_cell_init(std::span<const Observation> data, double rho, double rho1) {
    CesParams init{1.0, 0.5, 0.5, rho, rho1};
    double mean_output = 0.0;
    double mean_model = 0.0;
    for (const auto& obs : data) {
        mean_output += obs.output;
        const auto v = try_eval_ces(init, obs.capital, obs.labor);
        if (!v) return init;
        mean_model += *v;
    }
    if (mean_model > 0.0 && mean_output > 0.0) init.efficiency_a = mean_output / mean_model;
    return init;
}

/// (rss, rho, rho1) lexicographic order; smaller is better.
inline bool cell_better(double rss_a, double rho_a, double rho1_a, double rss_b, double rho_b,
                        double rho1_b) {
    if (rss_a != rss_b) return rss_a < rss_b;
    if (rho_a != rho_b) return rho_a < rho_b;
    return rho1_a < rho1_b;
}

}  // namespace detail

/// Fits {A, delta, delta1} at every (rho1, rho) lattice point with both
/// substitution parameters held fixed, assembles the negative-SSR surface and
/// selects the best cell overall plus the best cell whose elasticity of
/// substitution lies in [0, 1]. `threads` beyond 1 requires
/// CellInit::Independent; cell results are identical either way.
inline GridFitResult grid_search(std::span<const Observation> data, const RhoGrid& rho_grid,
                                 const RhoGrid& rho1_grid, Scale scale,
                                 const LmOptions& options = {},
                                 SigmaSource sigma_source = SigmaSource::Outer,
                                 CellInit init_mode = CellInit::WarmStart,
                                 unsigned threads = 1) {
    const std::vector<double> rho_values = expand_grid(rho_grid);
    const std::vector<double> rho1_values = expand_grid(rho1_grid);
    if (data.size() < 4)
        throw std::invalid_argument("grid search needs at least 4 observations");
    if (threads > 1 && init_mode == CellInit::WarmStart)
        throw std::invalid_argument("warm-start initialization cannot run in parallel");

    const std::size_t n_rho = rho_values.size();
    const std::size_t n_rho1 = rho1_values.size();
    const std::size_t n_cells = n_rho * n_rho1;

    const FreeMask mask{true, true, true, false, false};
    std::vector<std::optional<LmOutcome>> outcomes(n_cells);

    auto run_cell = [&](std::size_t i, std::size_t j, const std::optional<CesParams>& warm) {
        const double rho = rho_values[j];
        const double rho1 = rho1_values[i];
        if (warm) {
            CesParams init = *warm;
            init.rho = rho;
            init.rho1 = rho1;
            LmOutcome out = lm_fit(data, init, mask, scale, options);
            if (out.status != LmStatus::InadmissibleStart) return out;
        }
        return lm_fit(data, detail::default_cell_init(data, rho, rho1), mask, scale, options);
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < n_rho1; ++i) {
            for (std::size_t j = 0; j < n_rho; ++j) {
                std::optional<CesParams> warm;
                if (init_mode == CellInit::WarmStart) {
                    // best completed neighbor in the row-major scan
                    double best_rss = std::numeric_limits<double>::infinity();
                    const long di[] = {0, -1, -1, -1};
                    const long dj[] = {-1, -1, 0, 1};
                    for (int k = 0; k < 4; ++k) {
                        const long ni = static_cast<long>(i) + di[k];
                        const long nj = static_cast<long>(j) + dj[k];
                        if (ni < 0 || nj < 0 || nj >= static_cast<long>(n_rho)) continue;
                        const auto& prev = outcomes[static_cast<std::size_t>(ni) * n_rho +
                                                    static_cast<std::size_t>(nj)];
                        if (prev && prev->status != LmStatus::InadmissibleStart &&
                            prev->rss < best_rss) {
                            best_rss = prev->rss;
                            warm = prev->params;
                        }
                    }
                }
                outcomes[i * n_rho + j] = run_cell(i, j, warm);
            }
        }
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            while (true) {
                const std::size_t index = next.fetch_add(1);
                if (index >= n_cells) return;
                outcomes[index] = run_cell(index / n_rho, index % n_rho, std::nullopt);
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    GridFitResult result;
    result.surface.rho1_values = rho1_values;
    result.surface.rho_values = rho_values;
    result.surface.cells.resize(n_cells);

    bool have_best = false;
    bool have_reasonable = false;
    for (std::size_t i = 0; i < n_rho1; ++i) {
        for (std::size_t j = 0; j < n_rho; ++j) {
            const LmOutcome& out = *outcomes[i * n_rho + j];
            SurfaceCell& cell = result.surface.cell(i, j);
            cell.status = out.status;
            if (out.status == LmStatus::InadmissibleStart) continue;
            cell.neg_ssr = -out.rss;
            cell.efficiency_a = out.params.efficiency_a;
            cell.share_delta = out.params.share_delta;
            cell.share_delta1 = out.params.share_delta1;

            const double rho = rho_values[j];
            const double rho1 = rho1_values[i];
            const auto consider = [&](GridSelection& slot, bool& have) {
                if (!have || detail::cell_better(out.rss, rho, rho1, slot.outcome.rss, slot.rho,
                                                 slot.rho1)) {
                    slot = GridSelection{i, j, rho1, rho, out};
                    have = true;
                }
            };
            consider(result.best_unconstrained, have_best);

            const double sigma =
                sigma_from_rho(sigma_source == SigmaSource::Outer ? rho : rho1);
            if (sigma >= 0.0 && sigma <= 1.0) {
                if (!result.best_reasonable) result.best_reasonable.emplace();
                consider(*result.best_reasonable, have_reasonable);
            }
        }
    }
    if (!have_best) throw AllCellsFailed("no grid cell produced an admissible fit");
    if (!have_reasonable) result.best_reasonable.reset();
    return result;
}

enum class SurfaceFormat { LongCsv, Matrix };

/// LongCsv: header `rho1,rho,neg_ssr,status`, one row per cell, rho1-major
/// ascending, missing cells leave neg_ssr empty. Matrix: rho values as
/// columns, rho1 as rows. Values carry 17 significant digits; '\n' line
/// endings; no locale.
inline std::string export_surface(const SsrSurface& surface, SurfaceFormat format) {
    if (surface.rho1_values.empty() || surface.rho_values.empty())
        throw EmptyGrid("surface is empty");
    std::string out;
    if (format == SurfaceFormat::LongCsv) {
        out += "rho1,rho,neg_ssr,status\n";
        for (std::size_t i = 0; i < surface.rho1_values.size(); ++i) {
            for (std::size_t j = 0; j < surface.rho_values.size(); ++j) {
                const SurfaceCell& cell = surface.cell(i, j);
                out += detail::format_g17(surface.rho1_values[i]);
                out += ',';
                out += detail::format_g17(surface.rho_values[j]);
                out += ',';
                if (!cell.missing()) out += detail::format_g17(*cell.neg_ssr);
                out += ',';
                out += to_string(cell.status);
                out += '\n';
            }
        }
    } else {
        out += "rho1\\rho";
        for (const double rho : surface.rho_values) {
            out += ',';
            out += detail::format_g17(rho);
        }
        out += '\n';
        for (std::size_t i = 0; i < surface.rho1_values.size(); ++i) {
            out += detail::format_g17(surface.rho1_values[i]);
            for (std::size_t j = 0; j < surface.rho_values.size(); ++j) {
                out += ',';
                const SurfaceCell& cell = surface.cell(i, j);
                if (!cell.missing()) out += detail::format_g17(*cell.neg_ssr);
            }
            out += '\n';
        }
    }
    return out;
}

/// Inverse of the LongCsv export. Fitted per-cell parameters are not part of
/// the format and come back as NaN.
inline SsrSurface parse_surface_long_csv(const std::string& text) {
    const auto lines = detail::split_lines(text);
    if (lines.empty() || detail::trim(lines[0]) != "rho1,rho,neg_ssr,status")
        throw Error("bad surface header");

    struct Row {
        double rho1, rho;
        std::optional<double> neg_ssr;
        LmStatus status;
    };
    std::vector<Row> rows;
    for (std::size_t k = 1; k < lines.size(); ++k) {
        const auto fields = detail::split(lines[k], ',');
        if (fields.size() != 4) throw Error("bad surface row");
        Row row;
        const auto rho1 = detail::parse_double(detail::trim(fields[0]));
        const auto rho = detail::parse_double(detail::trim(fields[1]));
        if (!rho1 || !rho) throw Error("bad surface row");
        row.rho1 = *rho1;
        row.rho = *rho;
        const auto ssr_text = detail::trim(fields[2]);
        if (!ssr_text.empty()) {
            const auto ssr = detail::parse_double(ssr_text);
            if (!ssr) throw Error("bad surface row");
            row.neg_ssr = *ssr;
        }
        row.status = lm_status_from_string(std::string(detail::trim(fields[3])));
        rows.push_back(row);
    }

    SsrSurface surface;
    for (const auto& row : rows) {
        if (surface.rho1_values.empty() || row.rho1 > surface.rho1_values.back())
            surface.rho1_values.push_back(row.rho1);
        if (surface.rho1_values.size() == 1) surface.rho_values.push_back(row.rho);
    }
    if (rows.size() != surface.rho1_values.size() * surface.rho_values.size())
        throw Error("surface rows do not form a rho1-major lattice");
    surface.cells.resize(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        SurfaceCell& cell = surface.cells[k];
        cell.status = rows[k].status;
        cell.neg_ssr = rows[k].neg_ssr;
    }
    return surface;
}

}  // namespace cesfit

//! R-vine structure matrices, the stacked autoregressive structure builder,
//! R-vine log-density evaluation and R-vine sampling.
//!
//! # Matrix convention
//!
//! A regular vine on `d` variables is stored as a `d x d` lower-triangular
//! integer matrix `M` whose diagonal holds the variable labels `d, d-1, ..., 1`
//! from top-left to bottom-right. Reading column `i` (0-based), the cell
//! `M[r][i]` below the diagonal pairs the diagonal variable `M[i][i]` with
//! `M[r][i]`, conditioned on the entries *below* row `r` in the same column:
//! the bottom row is the first tree (empty conditioning set) and rows further
//! up belong to higher trees. Columns are processed right to left, so every
//! conditional distribution required by an edge has already been produced by a
//! column to its right; this is the standard two-array evaluation scheme.
//!
//! # Time-series labelling
//!
//! For `m` series observed at `T` time points, the scalar observation of
//! series `j` at time `t` carries the integer label `(t-1)*m + j`, so labels
//! grow with time and, within one time point, with the series index. The
//! structure produced by [`build_copar_structure`] chains each series through
//! its own past (a serial D-vine, conditioned on all earlier-ordered series)
//! and couples series pairs at every lag; copulas at lags beyond the model
//! order are independence copulas, which both evaluation and sampling skip.

use crate::error::{CoparError, Result};
use crate::pair_copulas::PairCopula;
use crate::special::clamp_unit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::collections::HashMap;
use std::fmt::Write as _;

/// A series/time coordinate identifying one scalar observation in the stacked
/// vector of `m` series over `T` time points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariableId {
    /// Series index, 1-based, following the column order of the data set.
    pub series: usize,
    /// Time index, 1-based.
    pub time: usize,
}

impl VariableId {
    /// Creates a coordinate; both indices are 1-based.
    pub fn new(series: usize, time: usize) -> VariableId {
        VariableId { series, time }
    }

    /// Flattens to the integer label used in structure matrices:
    /// `(time - 1) * m + series`.
    pub fn index(&self, m: usize) -> usize {
        (self.time - 1) * m + self.series
    }

    /// Inverse of [`VariableId::index`].
    pub fn from_index(index: usize, m: usize) -> VariableId {
        VariableId {
            series: (index - 1) % m + 1,
            time: (index - 1) / m + 1,
        }
    }
}

/// Provenance of a structure produced by [`build_copar_structure`]: series
/// count, series length and autoregressive order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoparShape {
    /// Number of series.
    pub m: usize,
    /// Number of time points.
    pub t_len: usize,
    /// Autoregressive order (maximal dependence lag).
    pub k: usize,
}

/// A validated R-vine matrix together with the pair-copula assigned to each
/// edge. Immutable in structure after construction; copulas are assigned per
/// cell with [`RVineMatrix::set_copula`].
#[derive(Debug, Clone, PartialEq)]
pub struct RVineMatrix {
    d: usize,
    /// Row-major lower-triangular structure; `structure[r][c]` is meaningful
    /// for `c <= r` and zero above the diagonal.
    structure: Vec<Vec<usize>>,
    /// Column-suffix maxima: `maxmat[r][c] = max(structure[r..d][c])`,
    /// meaningful below the diagonal. Drives the two-array lookups.
    maxmat: Vec<Vec<usize>>,
    /// Edge copulas for cells `(r, c)` with `r > c`, stored row-major in a
    /// flat triangle; defaults to independence everywhere.
    copulas: Vec<PairCopula>,
    copar: Option<CoparShape>,
}

fn tri_index(r: usize, c: usize) -> usize {
    r * (r - 1) / 2 + c
}

impl RVineMatrix {
    /// Builds a vine matrix from a row-major lower-triangular structure
    /// array, rejecting arrays that violate R-vine admissibility. All edge
    /// copulas start as independence.
    pub fn new(structure: Vec<Vec<usize>>) -> Result<RVineMatrix> {
        if !validate_rvine_matrix(&structure)? {
            return Err(CoparError::argument(
                "structure array is not an admissible R-vine matrix",
            ));
        }
        Ok(RVineMatrix::from_parts(structure, None))
    }

    /// Assembles the matrix from a structure already known to be admissible.
    fn from_parts(structure: Vec<Vec<usize>>, copar: Option<CoparShape>) -> RVineMatrix {
        let d = structure.len();
        let maxmat = suffix_maxima(&structure);
        let copulas = vec![PairCopula::Independence; d * (d - 1) / 2];
        RVineMatrix {
            d,
            structure,
            maxmat,
            copulas,
            copar,
        }
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.d
    }

    /// Structure entry at `(row, col)`; zero above the diagonal.
    pub fn entry(&self, row: usize, col: usize) -> usize {
        self.structure[row][col]
    }

    /// Diagonal variable of a column.
    pub fn diagonal(&self, col: usize) -> usize {
        self.structure[col][col]
    }

    /// Borrowed view of the full structure array.
    pub fn structure(&self) -> &[Vec<usize>] {
        &self.structure
    }

    /// The copula on the edge at `(row, col)`, `row > col`.
    pub fn copula(&self, row: usize, col: usize) -> &PairCopula {
        &self.copulas[tri_index(row, col)]
    }

    /// Assigns the copula of the edge at `(row, col)`, `row > col`.
    pub fn set_copula(&mut self, row: usize, col: usize, copula: PairCopula) -> Result<()> {
        if row >= self.d || col >= row {
            return Err(CoparError::argument(format!(
                "copula cell ({row}, {col}) is outside the strict lower triangle of a \
                 {d}-dimensional matrix",
                d = self.d
            )));
        }
        self.copulas[tri_index(row, col)] = copula;
        Ok(())
    }

    /// Provenance of matrices produced by [`build_copar_structure`] (and
    /// preserved by [`extend_structure_for_forecast`]); `None` for
    /// user-supplied structures.
    pub fn copar_shape(&self) -> Option<CoparShape> {
        self.copar
    }

    /// The dependence lag of the edge at `(row, col)`: the time difference
    /// between the column's diagonal variable and the cell variable. Only
    /// meaningful for matrices with a shape from [`build_copar_structure`].
    pub fn edge_lag(&self, row: usize, col: usize) -> Option<usize> {
        let shape = self.copar?;
        let diag = VariableId::from_index(self.structure[col][col], shape.m);
        let partner = VariableId::from_index(self.structure[row][col], shape.m);
        Some(diag.time - partner.time)
    }

    /// Serializes dimension, provenance, the row-major structure integers and
    /// every edge copula (family code plus parameters) as plain text. Floats
    /// are printed with the shortest representation that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dim {}", self.d);
        if let Some(shape) = self.copar {
            let _ = writeln!(out, "copar {} {} {}", shape.m, shape.t_len, shape.k);
        }
        let _ = writeln!(out, "structure");
        for row in &self.structure {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        let _ = writeln!(out, "copulas");
        for r in 1..self.d {
            for c in 0..r {
                let cop = self.copula(r, c);
                let mut line = format!("{r} {c} {}", cop.family().name());
                for p in cop.params() {
                    let _ = write!(line, " {p}");
                }
                let _ = writeln!(out, "{line}");
            }
        }
        let _ = writeln!(out, "end");
        out
    }

    /// Parses the format written by [`RVineMatrix::to_text`], re-validating
    /// the structure.
    pub fn from_text(text: &str) -> Result<RVineMatrix> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| CoparError::parse("empty vine matrix document"))?;
        let d: usize = header
            .strip_prefix("dim ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CoparError::parse(format!("expected `dim <d>`, found `{header}`")))?;
        let mut line = lines
            .next()
            .ok_or_else(|| CoparError::parse("missing structure section"))?;
        let mut copar = None;
        if let Some(rest) = line.strip_prefix("copar ") {
            let nums: Vec<usize> = rest
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CoparError::parse(format!("bad copar line: {e}")))?;
            if nums.len() != 3 {
                return Err(CoparError::parse("copar line needs `m t_len k`"));
            }
            copar = Some(CoparShape {
                m: nums[0],
                t_len: nums[1],
                k: nums[2],
            });
            line = lines
                .next()
                .ok_or_else(|| CoparError::parse("missing structure section"))?;
        }
        if line != "structure" {
            return Err(CoparError::parse(format!(
                "expected `structure`, found `{line}`"
            )));
        }
        let mut structure = Vec::with_capacity(d);
        for _ in 0..d {
            let row_line = lines
                .next()
                .ok_or_else(|| CoparError::parse("truncated structure section"))?;
            let row: Vec<usize> = row_line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CoparError::parse(format!("bad structure row: {e}")))?;
            structure.push(row);
        }
        let mut mat = RVineMatrix::new(structure)?;
        if let Some(shape) = copar {
            if shape.m * shape.t_len != d || shape.k + 1 > shape.t_len {
                return Err(CoparError::parse(
                    "copar line is inconsistent with the matrix dimension",
                ));
            }
            mat.copar = Some(shape);
        }
        let section = lines
            .next()
            .ok_or_else(|| CoparError::parse("missing copulas section"))?;
        if section != "copulas" {
            return Err(CoparError::parse(format!(
                "expected `copulas`, found `{section}`"
            )));
        }
        for r in 1..d {
            for c in 0..r {
                let cell = lines
                    .next()
                    .ok_or_else(|| CoparError::parse("truncated copulas section"))?;
                let mut tokens = cell.split_whitespace();
                let (row_tok, col_tok) = (tokens.next(), tokens.next());
                if row_tok != Some(r.to_string().as_str())
                    || col_tok != Some(c.to_string().as_str())
                {
                    return Err(CoparError::parse(format!(
                        "expected copula cell ({r}, {c}), found `{cell}`"
                    )));
                }
                let family = tokens
                    .next()
                    .ok_or_else(|| CoparError::parse("copula cell missing family code"))?
                    .parse()?;
                let params: Vec<f64> = tokens
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| CoparError::parse(format!("bad copula parameter: {e}")))?;
                mat.set_copula(r, c, PairCopula::from_params(family, &params)?)?;
            }
        }
        match lines.next() {
            Some("end") => Ok(mat),
            other => Err(CoparError::parse(format!(
                "expected `end`, found `{other:?}`"
            ))),
        }
    }
}

/// Column-suffix maxima of the below-diagonal entries (the diagonal itself is
/// included, which is harmless: it is only read below the diagonal).
fn suffix_maxima(structure: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let d = structure.len();
    let mut maxmat = vec![vec![0usize; d]; d];
    for c in 0..d {
        let mut running = 0;
        for r in (c..d).rev() {
            running = running.max(structure[r][c]);
            maxmat[r][c] = running;
        }
    }
    maxmat
}

/// Checks whether a row-major lower-triangular array is an admissible R-vine
/// matrix: descending diagonal `d..1`, every column's below-diagonal entries a
/// permutation of the labels smaller than its diagonal, and every edge's
/// partner/conditioning combination realizable as a conditional distribution
/// produced by a column to its right (the proximity condition, checked at the
/// column of the suffix maximum where it must be realized).
///
/// Returns an argument error for arrays that are not square lower-triangular
/// shapes; structural violations yield `Ok(false)`.
pub fn validate_rvine_matrix(structure: &[Vec<usize>]) -> Result<bool> {
    let d = structure.len();
    if d == 0 {
        return Err(CoparError::argument("empty structure array"));
    }
    for row in structure {
        if row.len() != d {
            return Err(CoparError::argument(format!(
                "structure array is not square: {d} rows but a row of width {}",
                row.len()
            )));
        }
    }
    // Zero above the diagonal, descending diagonal d..1.
    for r in 0..d {
        for c in r + 1..d {
            if structure[r][c] != 0 {
                return Ok(false);
            }
        }
        if structure[r][r] != d - r {
            return Ok(false);
        }
    }
    // Below-diagonal entries of column i: a permutation of 1..(d-i-1).
    let mut seen = vec![false; d + 1];
    for i in 0..d {
        let bound = d - i - 1;
        for r in i + 1..d {
            let v = structure[r][i];
            if v == 0 || v > bound || seen[v] {
                for rr in i + 1..r {
                    seen[structure[rr][i]] = false;
                }
                return Ok(false);
            }
            seen[v] = true;
        }
        for r in i + 1..d {
            seen[structure[r][i]] = false;
        }
    }
    // Proximity: each edge above the bottom row must find its partner's
    // conditional in the column of the suffix maximum, with matching
    // conditioning sets.
    let maxmat = suffix_maxima(structure);
    let mut stamp = vec![0u32; d + 1];
    let mut tick = 0u32;
    for i in 0..d {
        for r in i + 1..d.saturating_sub(1) {
            let b = structure[r][i];
            let mt = maxmat[r][i];
            let j = d - mt;
            if j <= i || j >= d {
                return Ok(false);
            }
            tick += 1;
            if mt == b {
                // Need {structure[r+1..d][i]} == {structure[r+1..d][j]}.
                if r < j {
                    return Ok(false);
                }
                for rr in r + 1..d {
                    stamp[structure[rr][j]] = tick;
                }
                for rr in r + 1..d {
                    if stamp[structure[rr][i]] != tick {
                        return Ok(false);
                    }
                }
            } else {
                // Need structure[r+1][j] == b and
                // {structure[r+1..d][i]} == {mt} ∪ {structure[r+2..d][j]}.
                if r + 1 >= d || r + 1 <= j || structure[r + 1][j] != b {
                    return Ok(false);
                }
                stamp[mt] = tick;
                for rr in r + 2..d {
                    stamp[structure[rr][j]] = tick;
                }
                for rr in r + 1..d {
                    if stamp[structure[rr][i]] != tick {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// Builds the stacked autoregressive R-vine structure for `m` series of
/// length `t_len` with order `k`: each series' serial dependence is a D-vine
/// chain conditioned on all earlier-ordered series, and series pairs are
/// coupled at every lag. All edge copulas start as independence placeholders;
/// model fitting assigns the blocks with lag at most `k`, and edges at larger
/// lags stay independence by construction of the order-`k` model.
///
/// The column with diagonal variable (series `j`, time `t`) lists, from the
/// top of the column downwards: for each series `i = m, m-1, ..., 1`, the
/// variables of series `i` at times `1, 2, ...` up to `t-1` (when `i >= j`)
/// or up to `t` (when `i < j`).
pub fn build_copar_structure(m: usize, t_len: usize, k: usize) -> Result<RVineMatrix> {
    if m < 2 {
        return Err(CoparError::argument(format!(
            "at least two series are required, got m = {m}"
        )));
    }
    if t_len < 2 {
        return Err(CoparError::argument(format!(
            "at least two time points are required, got T = {t_len}"
        )));
    }
    if k == 0 || k >= t_len {
        return Err(CoparError::argument(format!(
            "order must satisfy 1 <= k <= T - 1, got k = {k} with T = {t_len}"
        )));
    }
    let d = m * t_len;
    let mut structure = vec![vec![0usize; d]; d];
    for col in 0..d {
        let g = d - col;
        structure[col][col] = g;
        let diag = VariableId::from_index(g, m);
        let mut row = col + 1;
        for series in (1..=m).rev() {
            let last_time = if series >= diag.series {
                diag.time - 1
            } else {
                diag.time
            };
            for time in 1..=last_time {
                structure[row][col] = VariableId::new(series, time).index(m);
                row += 1;
            }
        }
        debug_assert_eq!(row, d);
    }
    Ok(RVineMatrix::from_parts(
        structure,
        Some(CoparShape { m, t_len, k }),
    ))
}

/// Number of distinct non-trivial pair-copula blocks in the order-`k` model
/// for `m` series: `m^2 k + m (m-1) / 2` (serial blocks per series and lag,
/// between-series blocks in both directions, plus the lag-0 couplings).
/// Callers must respect `m >= 2`, `t_len >= 2` and `1 <= k <= t_len - 1`;
/// the count does not otherwise depend on `t_len`.
pub fn count_copulas(m: usize, _t_len: usize, k: usize) -> usize {
    m * m * k + m * (m - 1) / 2
}

/// Fetches the partner argument F(partner | conditioning) for the edge at
/// `(r, i)`: the raw observation for first-tree edges, otherwise the direct
/// or indirect conditional stored by the column of the suffix maximum.
fn partner_value(
    mat: &RVineMatrix,
    u: &[f64],
    vdir: &[Vec<f64>],
    vind: &[Vec<f64>],
    r: usize,
    i: usize,
) -> f64 {
    let b = mat.structure[r][i];
    if r == mat.d - 1 {
        return u[b - 1];
    }
    let mt = mat.maxmat[r][i];
    let j = mat.d - mt;
    debug_assert!(j > i && r >= j);
    if mt == b {
        vdir[r + 1][j]
    } else {
        vind[r + 1][j]
    }
}

/// Log-density of the vine copula at one point of the unit hypercube:
/// the sum of log pair-copula densities over all edges, computed by the
/// column-wise two-array recursion. Inputs are clamped away from 0 and 1, so
/// the result is finite. Independence edges contribute nothing and skip all
/// copula evaluations.
pub fn rvine_logdensity(mat: &RVineMatrix, u: &[f64]) -> Result<f64> {
    let d = mat.d;
    if u.len() != d {
        return Err(CoparError::argument(format!(
            "observation has {} entries but the vine has {d} variables",
            u.len()
        )));
    }
    if d == 1 {
        return Ok(0.0);
    }
    let uu: Vec<f64> = u.iter().map(|&x| clamp_unit(x)).collect();
    let mut vdir = vec![vec![0.0; d]; d];
    let mut vind = vec![vec![0.0; d]; d];
    let mut total = 0.0;
    for i in (0..d).rev() {
        let g = mat.structure[i][i];
        let mut direct = uu[g - 1];
        for r in (i + 1..d).rev() {
            let w = partner_value(mat, &uu, &vdir, &vind, r, i);
            let cop = mat.copula(r, i);
            let (hdir, hind) = if matches!(cop, PairCopula::Independence) {
                (direct, w)
            } else {
                total += cop.log_pdf(direct, w);
                (cop.h(direct, w), cop.h(w, direct))
            };
            vdir[r][i] = hdir;
            vind[r][i] = hind;
            direct = hdir;
        }
    }
    Ok(total)
}

/// Draws `n` samples from the vine copula. Row `p` of the result holds one
/// d-vector of probabilities, with the value for variable `v` at position
/// `v - 1`. Each row is generated from its own generator seeded with
/// `seed + p`, so results are deterministic and rows could be produced
/// independently; within a row, one uniform per variable is drawn up front in
/// variable order.
pub fn rvine_sample(mat: &RVineMatrix, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = mat.d;
    let mut out = Vec::with_capacity(n);
    let mut vdir = vec![vec![0.0; d]; d];
    let mut vind = vec![vec![0.0; d]; d];
    let mut partners = vec![0.0; d];
    for path in 0..n {
        let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(path as u64));
        let w: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let mut row = vec![0.0; d];
        for i in (0..d).rev() {
            let g = mat.structure[i][i];
            for r in i + 1..d {
                partners[r] = partner_value(mat, &row, &vdir, &vind, r, i);
            }
            // Invert the h-function chain from the deepest tree down to the
            // first tree to realize the new variable.
            let mut x = clamp_unit(w[g - 1]);
            for r in i + 1..d {
                let cop = mat.copula(r, i);
                if !matches!(cop, PairCopula::Independence) {
                    x = cop.h_inverse(x, partners[r]);
                }
            }
            row[g - 1] = x;
            // Climb back up storing the conditionals later columns will need.
            let mut direct = x;
            for r in (i + 1..d).rev() {
                let cop = mat.copula(r, i);
                let (hdir, hind) = if matches!(cop, PairCopula::Independence) {
                    (direct, partners[r])
                } else {
                    (cop.h(direct, partners[r]), cop.h(partners[r], direct))
                };
                vdir[r][i] = hdir;
                vind[r][i] = hind;
                direct = hdir;
            }
        }
        out.push(row);
    }
    out
}

/// The (diagonal series, partner series, lag) descriptor of an edge cell in a
/// structure built by [`build_copar_structure`]; cells with equal descriptors
/// carry the same pair-copula block.
fn cell_descriptor(shape: CoparShape, mat: &RVineMatrix, r: usize, c: usize) -> (usize, usize, usize) {
    let diag = VariableId::from_index(mat.structure[c][c], shape.m);
    let partner = VariableId::from_index(mat.structure[r][c], shape.m);
    (diag.series, partner.series, diag.time - partner.time)
}

/// Extends a fitted stacked-autoregressive structure by `h` future time
/// points, appending `m * h` columns on the left. Existing edge cells carry
/// over unchanged and new cells reuse the block copula for their
/// (series pair, lag) combination; lags beyond the model order remain
/// independence copulas. Requires a matrix produced by
/// [`build_copar_structure`] (extension preserves that provenance).
pub fn extend_structure_for_forecast(mat: &RVineMatrix, h: usize) -> Result<RVineMatrix> {
    let shape = mat.copar.ok_or_else(|| {
        CoparError::argument(
            "extension requires a structure built for stacked series (shape metadata missing)",
        )
    })?;
    if h == 0 {
        return Ok(mat.clone());
    }
    let mut blocks: HashMap<(usize, usize, usize), PairCopula> = HashMap::new();
    for r in 1..mat.d {
        for c in 0..r {
            let desc = cell_descriptor(shape, mat, r, c);
            if desc.2 <= shape.k {
                blocks.insert(desc, mat.copula(r, c).clone());
            }
        }
    }
    let mut ext = build_copar_structure(shape.m, shape.t_len + h, shape.k)?;
    for r in 1..ext.d {
        for c in 0..r {
            let desc = cell_descriptor(shape, &ext, r, c);
            if desc.2 <= shape.k {
                let block = blocks.get(&desc).ok_or_else(|| {
                    CoparError::argument(format!(
                        "matrix is missing the block for series pair ({}, {}) at lag {}",
                        desc.0, desc.1, desc.2
                    ))
                })?;
                ext.set_copula(r, c, block.clone())?;
            }
        }
    }
    Ok(ext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_quantile;
    use crate::stats::kendall_tau;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    /// The 8-dimensional reference structure for two series over four time
    /// points, written with labels X_t -> 2t-1, Y_t -> 2t.
    fn eight_dim_reference() -> Vec<Vec<usize>> {
        vec![
            vec![8, 0, 0, 0, 0, 0, 0, 0],
            vec![2, 7, 0, 0, 0, 0, 0, 0],
            vec![4, 2, 6, 0, 0, 0, 0, 0],
            vec![6, 4, 2, 5, 0, 0, 0, 0],
            vec![1, 6, 4, 2, 4, 0, 0, 0],
            vec![3, 1, 1, 4, 2, 3, 0, 0],
            vec![5, 3, 3, 1, 1, 2, 2, 0],
            vec![7, 5, 5, 3, 3, 1, 1, 1],
        ]
    }

    /// The 12-dimensional reference structure for three series over four time
    /// points, labels X_t -> 3t-2, Y_t -> 3t-1, Z_t -> 3t.
    fn twelve_dim_reference() -> Vec<Vec<usize>> {
        vec![
            vec![12, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![3, 11, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![6, 3, 10, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![9, 6, 3, 9, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![2, 9, 6, 3, 8, 0, 0, 0, 0, 0, 0, 0],
            vec![5, 2, 9, 6, 3, 7, 0, 0, 0, 0, 0, 0],
            vec![8, 5, 2, 2, 6, 3, 6, 0, 0, 0, 0, 0],
            vec![11, 8, 5, 5, 2, 6, 3, 5, 0, 0, 0, 0],
            vec![1, 1, 8, 8, 5, 2, 2, 3, 4, 0, 0, 0],
            vec![4, 4, 1, 1, 1, 5, 5, 2, 3, 3, 0, 0],
            vec![7, 7, 4, 4, 4, 1, 1, 1, 2, 2, 2, 0],
            vec![10, 10, 7, 7, 7, 4, 4, 4, 1, 1, 1, 1],
        ]
    }

    /// The 10-dimensional one-step extension of the 8-dimensional structure.
    fn ten_dim_reference() -> Vec<Vec<usize>> {
        vec![
            vec![10, 0, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![2, 9, 0, 0, 0, 0, 0, 0, 0, 0],
            vec![4, 2, 8, 0, 0, 0, 0, 0, 0, 0],
            vec![6, 4, 2, 7, 0, 0, 0, 0, 0, 0],
            vec![8, 6, 4, 2, 6, 0, 0, 0, 0, 0],
            vec![1, 8, 6, 4, 2, 5, 0, 0, 0, 0],
            vec![3, 1, 1, 6, 4, 2, 4, 0, 0, 0],
            vec![5, 3, 3, 1, 1, 4, 2, 3, 0, 0],
            vec![7, 5, 5, 3, 3, 1, 1, 2, 2, 0],
            vec![9, 7, 7, 5, 5, 3, 3, 1, 1, 1],
        ]
    }

    #[test]
    fn variable_id_flattening_is_bijective() {
        for m in 1..=5 {
            for series in 1..=m {
                for time in 1..=7 {
                    let id = VariableId::new(series, time);
                    let idx = id.index(m);
                    assert_eq!(VariableId::from_index(idx, m), id);
                }
            }
            for idx in 1..=m * 7 {
                assert_eq!(VariableId::from_index(idx, m).index(m), idx);
            }
        }
    }

    #[test]
    fn builder_matches_eight_dim_reference() {
        let mat = build_copar_structure(2, 4, 3).unwrap();
        assert_eq!(mat.structure(), eight_dim_reference().as_slice());
        assert_eq!(
            mat.copar_shape(),
            Some(CoparShape {
                m: 2,
                t_len: 4,
                k: 3
            })
        );
    }

    #[test]
    fn builder_matches_twelve_dim_reference() {
        let mat = build_copar_structure(3, 4, 3).unwrap();
        assert_eq!(mat.structure(), twelve_dim_reference().as_slice());
        let diag: Vec<usize> = (0..12).map(|i| mat.diagonal(i)).collect();
        assert_eq!(diag, vec![12, 11, 10, 9, 8, 7, 6, 5, 4, 3, 2, 1]);
    }

    #[test]
    fn builder_rejects_bad_arguments() {
        assert!(build_copar_structure(1, 4, 1).is_err());
        assert!(build_copar_structure(2, 1, 1).is_err());
        assert!(build_copar_structure(2, 4, 0).is_err());
        assert!(build_copar_structure(2, 4, 4).is_err());
    }

    #[test]
    fn built_structures_validate() {
        for m in 2..=4 {
            for t_len in 2..=6 {
                for k in 1..t_len {
                    let mat = build_copar_structure(m, t_len, k).unwrap();
                    assert!(
                        validate_rvine_matrix(mat.structure()).unwrap(),
                        "structure for m={m}, T={t_len}, k={k} failed validation"
                    );
                }
            }
        }
    }

    #[test]
    fn count_copulas_matches_references_and_enumeration() {
        assert_eq!(count_copulas(2, 4, 3), 13);
        assert_eq!(count_copulas(2, 4, 1), 5);
        assert_eq!(count_copulas(2, 4, 2), 9);
        for t_len in 2..=50 {
            assert_eq!(count_copulas(2, t_len, t_len - 1), 4 * t_len - 3);
        }
        for m in 2..=5 {
            for k in 1..=3 {
                let t_len = k + 2;
                let mat = build_copar_structure(m, t_len, k).unwrap();
                let shape = mat.copar_shape().unwrap();
                let mut seen = std::collections::HashSet::new();
                for r in 1..mat.dim() {
                    for c in 0..r {
                        let desc = cell_descriptor(shape, &mat, r, c);
                        if desc.2 <= k {
                            seen.insert(desc);
                        }
                    }
                }
                assert_eq!(
                    seen.len(),
                    count_copulas(m, t_len, k),
                    "enumeration mismatch for m={m}, k={k}"
                );
            }
        }
    }

    #[test]
    fn validate_accepts_references_and_degenerate() {
        assert!(validate_rvine_matrix(&eight_dim_reference()).unwrap());
        assert!(validate_rvine_matrix(&twelve_dim_reference()).unwrap());
        assert!(validate_rvine_matrix(&ten_dim_reference()).unwrap());
        assert!(validate_rvine_matrix(&[vec![1]]).unwrap());
    }

    #[test]
    fn validate_rejects_perturbations() {
        // Swapping two below-diagonal entries of the first column keeps the
        // column a permutation but breaks the proximity condition.
        let mut swapped = eight_dim_reference();
        swapped[1][0] = 4;
        swapped[2][0] = 2;
        assert!(!validate_rvine_matrix(&swapped).unwrap());

        let mut duplicated = eight_dim_reference();
        duplicated[1][0] = 4; // column 0 now holds 4 twice and misses 2
        assert!(!validate_rvine_matrix(&duplicated).unwrap());

        let mut wrong_diag = eight_dim_reference();
        wrong_diag[0][0] = 7;
        wrong_diag[1][1] = 8;
        assert!(!validate_rvine_matrix(&wrong_diag).unwrap());

        let mut upper = eight_dim_reference();
        upper[0][3] = 1;
        assert!(!validate_rvine_matrix(&upper).unwrap());

        assert!(validate_rvine_matrix(&[vec![2, 0], vec![1]]).is_err());
    }

    #[test]
    fn set_copula_checks_bounds() {
        let mut mat = build_copar_structure(2, 2, 1).unwrap();
        assert!(mat
            .set_copula(1, 0, PairCopula::Gaussian { rho: 0.3 })
            .is_ok());
        assert!(mat.set_copula(0, 0, PairCopula::Independence).is_err());
        assert!(mat.set_copula(1, 2, PairCopula::Independence).is_err());
        assert!(mat.set_copula(9, 0, PairCopula::Independence).is_err());
    }

    #[test]
    fn logdensity_independence_is_zero() {
        let mat = build_copar_structure(2, 3, 2).unwrap();
        let u = [0.1, 0.9, 0.4, 0.6, 0.25, 0.75];
        assert_eq!(rvine_logdensity(&mat, &u).unwrap(), 0.0);
        assert!(rvine_logdensity(&mat, &u[..4]).is_err());
    }

    #[test]
    fn logdensity_two_dimensional_matches_pair() {
        let mut mat = RVineMatrix::new(vec![vec![2, 0], vec![1, 1]]).unwrap();
        let cop = PairCopula::Gaussian { rho: 0.6 };
        mat.set_copula(1, 0, cop.clone()).unwrap();
        for &(u, v) in &[(0.3, 0.7), (0.05, 0.95), (0.5, 0.5), (0.9, 0.2)] {
            let got = rvine_logdensity(&mat, &[u, v]).unwrap();
            assert_abs_diff_eq!(got, cop.log_pdf(u, v), epsilon = 1e-14);
        }
    }

    /// Gaussian three-dimensional vine against the closed-form trivariate
    /// Gaussian copula density, with the unconditional correlation recovered
    /// from the partial correlation on the deepest edge.
    #[test]
    fn logdensity_gaussian_matches_trivariate_normal() {
        let structure = vec![vec![3, 0, 0], vec![1, 2, 0], vec![2, 1, 1]];
        let mut mat = RVineMatrix::new(structure).unwrap();
        let (r32, r21, r31_2) = (0.55, -0.4, 0.35);
        mat.set_copula(2, 0, PairCopula::Gaussian { rho: r32 }).unwrap();
        mat.set_copula(2, 1, PairCopula::Gaussian { rho: r21 }).unwrap();
        mat.set_copula(1, 0, PairCopula::Gaussian { rho: r31_2 }).unwrap();
        let r31 = r31_2 * ((1.0 - r32 * r32) * (1.0 - r21 * r21)).sqrt() + r32 * r21;
        let sigma = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, r21, r31, r21, 1.0, r32, r31, r32, 1.0],
        );
        let inv = sigma.clone().try_inverse().unwrap();
        let det: f64 = sigma.determinant();
        let points = [
            [0.2, 0.5, 0.8],
            [0.9, 0.9, 0.1],
            [0.35, 0.6, 0.45],
            [0.05, 0.5, 0.95],
            [0.7, 0.15, 0.55],
        ];
        for point in points {
            let z = nalgebra::DVector::from_iterator(3, point.iter().map(|&p| norm_quantile(p)));
            let quad = (z.transpose() * (&inv - DMatrix::identity(3, 3)) * &z)[(0, 0)];
            let want = -0.5 * det.ln() - 0.5 * quad;
            let got = rvine_logdensity(&mat, &point).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-10);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_seed_sensitive() {
        let mut mat = build_copar_structure(2, 2, 1).unwrap();
        mat.set_copula(3, 0, PairCopula::Gaussian { rho: 0.5 }).unwrap();
        mat.set_copula(3, 1, PairCopula::Clayton { theta: 1.0 }).unwrap();
        let a = rvine_sample(&mat, 6, 99);
        let b = rvine_sample(&mat, 6, 99);
        let c = rvine_sample(&mat, 6, 100);
        assert_eq!(a, b);
        assert_ne!(a, c);
        // Per-path seeding: a longer run starts with the same paths.
        let longer = rvine_sample(&mat, 9, 99);
        assert_eq!(&longer[..6], &a[..]);
    }

    #[test]
    fn sampling_recovers_pair_tau() {
        let mut mat = RVineMatrix::new(vec![vec![2, 0], vec![1, 1]]).unwrap();
        mat.set_copula(1, 0, PairCopula::Gaussian { rho: 0.26 }).unwrap();
        let rows = rvine_sample(&mat, 20_000, 7);
        let us: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let vs: Vec<f64> = rows.iter().map(|r| r[1]).collect();
        let tau = kendall_tau(&us, &vs).unwrap();
        assert_abs_diff_eq!(tau, 0.17, epsilon = 0.02);
    }

    #[test]
    fn independence_vine_samples_are_uncorrelated() {
        let mat = build_copar_structure(2, 2, 1).unwrap();
        let rows = rvine_sample(&mat, 10_000, 42);
        for a in 0..4 {
            for b in a + 1..4 {
                let xs: Vec<f64> = rows.iter().map(|r| r[a]).collect();
                let ys: Vec<f64> = rows.iter().map(|r| r[b]).collect();
                let tau = kendall_tau(&xs, &ys).unwrap();
                assert!(
                    tau.abs() <= 0.03,
                    "variables {a}, {b} show tau = {tau}"
                );
            }
        }
    }

    #[test]
    fn samples_have_uniform_margins() {
        let mut mat = build_copar_structure(2, 2, 1).unwrap();
        mat.set_copula(3, 0, PairCopula::Gumbel { theta: 1.7 }).unwrap();
        mat.set_copula(2, 0, PairCopula::Frank { theta: 2.0 }).unwrap();
        mat.set_copula(1, 0, PairCopula::Gaussian { rho: 0.4 }).unwrap();
        mat.set_copula(3, 1, PairCopula::Clayton { theta: 0.8 }).unwrap();
        let rows = rvine_sample(&mat, 8_000, 3);
        for v in 0..4 {
            let mean = rows.iter().map(|r| r[v]).sum::<f64>() / rows.len() as f64;
            let second = rows.iter().map(|r| r[v] * r[v]).sum::<f64>() / rows.len() as f64;
            assert_abs_diff_eq!(mean, 0.5, epsilon = 0.02);
            assert_abs_diff_eq!(second, 1.0 / 3.0, epsilon = 0.02);
        }
    }

    /// Importance identity: under vine samples, the mean of 1/c(U) is the
    /// volume of the unit hypercube.
    #[test]
    fn sampling_and_density_are_consistent() {
        let mut mat = build_copar_structure(2, 2, 1).unwrap();
        mat.set_copula(3, 0, PairCopula::Gaussian { rho: 0.3 }).unwrap();
        mat.set_copula(2, 0, PairCopula::Clayton { theta: 0.5 }).unwrap();
        mat.set_copula(1, 0, PairCopula::Frank { theta: 1.5 }).unwrap();
        mat.set_copula(3, 1, PairCopula::Gumbel { theta: 1.2 }).unwrap();
        mat.set_copula(2, 1, PairCopula::SurvivalClayton { theta: 0.4 }).unwrap();
        mat.set_copula(3, 2, PairCopula::Joe { theta: 1.15 }).unwrap();
        let rows = rvine_sample(&mat, 40_000, 11);
        let mut acc = 0.0;
        for row in &rows {
            acc += (-rvine_logdensity(&mat, row).unwrap()).exp();
        }
        let mean = acc / rows.len() as f64;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 0.03);
    }

    #[test]
    fn extension_matches_ten_dim_reference() {
        let mat = build_copar_structure(2, 4, 3).unwrap();
        let ext = extend_structure_for_forecast(&mat, 1).unwrap();
        assert_eq!(ext.structure(), ten_dim_reference().as_slice());
        assert_eq!(
            ext.copar_shape(),
            Some(CoparShape {
                m: 2,
                t_len: 5,
                k: 3
            })
        );
    }

    #[test]
    fn extension_preserves_blocks_and_composes() {
        let mut mat = build_copar_structure(2, 4, 1).unwrap();
        let shape = mat.copar_shape().unwrap();
        let block = |desc: (usize, usize, usize)| -> Option<PairCopula> {
            match desc {
                (1, 1, 1) => Some(PairCopula::Gaussian { rho: 0.5 }),
                (2, 1, 0) => Some(PairCopula::Clayton { theta: 1.0 }),
                (2, 1, 1) => Some(PairCopula::Frank { theta: 2.0 }),
                (1, 2, 1) => Some(PairCopula::Gumbel { theta: 1.5 }),
                (2, 2, 1) => Some(PairCopula::Gaussian { rho: 0.3 }),
                _ => None,
            }
        };
        for r in 1..mat.dim() {
            for c in 0..r {
                if let Some(cop) = block(cell_descriptor(shape, &mat, r, c)) {
                    mat.set_copula(r, c, cop).unwrap();
                }
            }
        }
        let ext = extend_structure_for_forecast(&mat, 1).unwrap();
        for r in 1..ext.dim() {
            for c in 0..r {
                let desc = cell_descriptor(shape, &ext, r, c);
                match block(desc) {
                    Some(cop) => assert_eq!(ext.copula(r, c), &cop, "cell ({r}, {c})"),
                    None => assert_eq!(
                        ext.copula(r, c),
                        &PairCopula::Independence,
                        "cell ({r}, {c}) at lag {} should be independence",
                        desc.2
                    ),
                }
            }
        }
        // Restriction: original cells reappear shifted by m*h.
        for r in 1..mat.dim() {
            for c in 0..r {
                assert_eq!(ext.entry(r + 2, c + 2), mat.entry(r, c));
                assert_eq!(ext.copula(r + 2, c + 2), mat.copula(r, c));
            }
        }
        // h = 0 is the identity and h = 2 composes from two single steps.
        assert_eq!(extend_structure_for_forecast(&mat, 0).unwrap(), mat);
        let two = extend_structure_for_forecast(&mat, 2).unwrap();
        let chained = extend_structure_for_forecast(&ext, 1).unwrap();
        assert_eq!(two, chained);
        // Plain matrices without builder provenance cannot be extended.
        let plain = RVineMatrix::new(vec![vec![2, 0], vec![1, 1]]).unwrap();
        assert!(extend_structure_for_forecast(&plain, 1).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let mut mat = build_copar_structure(2, 3, 2).unwrap();
        mat.set_copula(5, 0, PairCopula::Gaussian { rho: 0.123_456_789_012_345 })
            .unwrap();
        mat.set_copula(4, 0, PairCopula::StudentT { rho: -0.3, nu: 7.25 })
            .unwrap();
        mat.set_copula(3, 0, PairCopula::Clayton { theta: 2.5 }).unwrap();
        mat.set_copula(5, 1, PairCopula::SurvivalJoe { theta: 1.0 + 1e-9 })
            .unwrap();
        let text = mat.to_text();
        let back = RVineMatrix::from_text(&text).unwrap();
        assert_eq!(back, mat);
        assert_eq!(back.to_text(), text);

        let plain = RVineMatrix::new(vec![vec![2, 0], vec![1, 1]]).unwrap();
        let round = RVineMatrix::from_text(&plain.to_text()).unwrap();
        assert_eq!(round.copar_shape(), None);
        assert_eq!(round, plain);

        assert!(RVineMatrix::from_text("dim 2\nstructure\n2 0\n1 1\n").is_err());
        assert!(RVineMatrix::from_text("").is_err());
    }

    #[test]
    fn edge_lag_reports_time_differences() {
        let mat = build_copar_structure(2, 4, 2).unwrap();
        // Bottom row of column 0 pairs Y_4 with X_4: lag 0.
        assert_eq!(mat.edge_lag(7, 0), Some(0));
        // Top of column 0 pairs Y_4 with Y_1: lag 3.
        assert_eq!(mat.edge_lag(1, 0), Some(3));
        let plain = RVineMatrix::new(vec![vec![2, 0], vec![1, 1]]).unwrap();
        assert_eq!(plain.edge_lag(1, 0), None);
    }

    #[test]
    fn family_tags_survive_round_trip() {
        // Every family appears in a serialized matrix at least once.
        let mut mat = build_copar_structure(2, 5, 4).unwrap();
        let examples = [
            PairCopula::Gaussian { rho: 0.2 },
            PairCopula::StudentT { rho: 0.1, nu: 5.0 },
            PairCopula::Clayton { theta: 1.2 },
            PairCopula::Gumbel { theta: 1.3 },
            PairCopula::Frank { theta: -3.0 },
            PairCopula::Joe { theta: 2.0 },
            PairCopula::SurvivalClayton { theta: 0.7 },
            PairCopula::SurvivalGumbel { theta: 1.6 },
            PairCopula::SurvivalJoe { theta: 1.4 },
        ];
        for (offset, cop) in examples.iter().enumerate() {
            mat.set_copula(9, offset.min(8), cop.clone()).unwrap();
            mat.set_copula(offset + 1, offset, cop.clone()).unwrap();
        }
        let back = RVineMatrix::from_text(&mat.to_text()).unwrap();
        for (offset, cop) in examples.iter().enumerate() {
            assert_eq!(back.copula(offset + 1, offset).family(), cop.family());
        }
        assert_eq!(back, mat);
    }
}

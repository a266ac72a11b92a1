// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Multidimensional scaling over a row-partitioned distance matrix.
//!
//! Table operators turn input points into a distance block per rank; the
//! SMACOF iteration then runs on arrays, with collectives rebuilding the
//! replicated embedding after every step.

use crate::collectives::{allgather_bytes, allreduce, NumericArray, ReduceOp};
use crate::columnar::Table;
use crate::dist::WorkerContext;
use crate::error::{Error, Result};

/// Rows `[lo, hi)` owned by `rank` when `n` rows are split over `world_size`
/// ranks; the first `n mod world_size` ranks get one extra row.
pub fn row_range(n: usize, world_size: usize, rank: usize) -> (usize, usize) {
    let base = n / world_size;
    let extra = n % world_size;
    let lo = rank * base + rank.min(extra);
    let hi = lo + base + usize::from(rank < extra);
    (lo, hi)
}

/// This rank's rows of the global distance matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceBlock {
    pub rank: usize,
    /// Global point count.
    pub n: usize,
    pub lo: usize,
    pub hi: usize,
    /// `(hi - lo) × n` distances, row-major.
    pub values: Vec<f64>,
}

impl DistanceBlock {
    pub fn rows(&self) -> usize {
        self.hi - self.lo
    }

    /// Distances from global point `i` (which must be owned) to every point.
    pub fn row(&self, i: usize) -> &[f64] {
        assert!(
            (self.lo..self.hi).contains(&i),
            "row {i} not in [{}, {})",
            self.lo,
            self.hi
        );
        let r = i - self.lo;
        &self.values[r * self.n..(r + 1) * self.n]
    }
}

/// `n` points in `dims` dimensions, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub n: usize,
    pub dims: usize,
    pub coords: Vec<f64>,
}

impl Embedding {
    pub fn new(n: usize, dims: usize, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != n * dims {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates for {n}x{dims}",
                coords.len()
            )));
        }
        Ok(Embedding { n, dims, coords })
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dims..(i + 1) * self.dims]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        euclidean(self.point(i), self.point(j))
    }

    /// Shared-seed initial embedding: coordinate `c` is the `c`-th SplitMix64
    /// output for `seed`, mapped to `[-0.5, 0.5)`.
    pub fn random(n: usize, dims: usize, seed: u64) -> Self {
        let coords = (0..n * dims)
            .map(|c| (splitmix64(seed, c as u64) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            .collect();
        Embedding { n, dims, coords }
    }
}

/// The `index`-th output of a SplitMix64 generator started at `seed`.
pub fn splitmix64(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Allgather of per-rank f64 vectors where any rank may instead report a
/// local failure; every rank then fails rather than waiting forever.
fn allgather_checked(ctx: &mut WorkerContext, local: Result<Vec<f64>>) -> Result<Vec<f64>> {
    let (payload, err) = match local {
        Ok(v) => {
            let mut p = Vec::with_capacity(1 + v.len() * 8);
            p.push(0u8);
            for x in v {
                p.extend_from_slice(&x.to_le_bytes());
            }
            (p, None)
        }
        Err(e) => (vec![1u8], Some(e)),
    };
    let parts = allgather_bytes(ctx.comm_mut(), payload)?;
    if let Some(e) = err {
        return Err(e);
    }
    let mut out = Vec::new();
    for (src, p) in parts.iter().enumerate() {
        if p.first() != Some(&0) || (p.len() - 1) % 8 != 0 {
            return Err(Error::InvalidArgument(format!("rank {src} failed")));
        }
        out.extend(
            p[1..]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap())),
        );
    }
    Ok(out)
}

fn local_features(points: &Table, feature_columns: &[&str]) -> Result<Vec<f64>> {
    let cols = feature_columns
        .iter()
        .map(|c| {
            let col = points.column_by_name(c)?;
            if !col.dtype().is_numeric() {
                return Err(Error::InvalidArgument(format!(
                    "feature column {c} is {}",
                    col.dtype()
                )));
            }
            if col.null_count() > 0 {
                return Err(Error::InvalidArgument(format!(
                    "feature column {c} has nulls"
                )));
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(points.num_rows() * cols.len());
    for r in 0..points.num_rows() {
        for (c, col) in feature_columns.iter().zip(&cols) {
            let v = col.numeric_at(r).expect("numeric, non-null");
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "feature {c} of local row {r} is {v}"
                )));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Gather every rank's points (rank order defines global point indices) and
/// compute Euclidean distances from this rank's owned rows to all points.
pub fn compute_distance_block(
    ctx: &mut WorkerContext,
    points: &Table,
    feature_columns: &[&str],
) -> Result<DistanceBlock> {
    if feature_columns.is_empty() {
        return Err(Error::InvalidArgument("no feature columns".into()));
    }
    let dims = feature_columns.len();
    let local = local_features(points, feature_columns);
    let all = allgather_checked(ctx, local)?;
    let n = all.len() / dims;
    let (lo, hi) = row_range(n, ctx.world_size(), ctx.rank());
    let mut values = Vec::with_capacity((hi - lo) * n);
    for i in lo..hi {
        let a = &all[i * dims..(i + 1) * dims];
        for j in 0..n {
            values.push(euclidean(a, &all[j * dims..(j + 1) * dims]));
        }
    }
    Ok(DistanceBlock {
        rank: ctx.rank(),
        n,
        lo,
        hi,
        values,
    })
}

/// One Guttman transform for the owned rows: `X'_i = (1/n) Σ_j b_ij X_j`
/// with `b_ij = -δ_ij / d_ij(X)` (zero when `d_ij = 0`) and
/// `b_ii = -Σ_{j≠i} b_ij`. Returns `(hi - lo) × dims` coordinates.
pub fn smacof_step(block: &DistanceBlock, x: &Embedding) -> Result<Vec<f64>> {
    if x.n != block.n {
        return Err(Error::InvalidArgument(format!(
            "embedding has {} points, distances {}",
            x.n, block.n
        )));
    }
    let (n, dims) = (x.n, x.dims);
    let mut out = Vec::with_capacity(block.rows() * dims);
    let mut b = vec![0.0; n];
    for i in block.lo..block.hi {
        let delta = block.row(i);
        let mut diag = 0.0;
        for j in 0..n {
            b[j] = 0.0;
            if j != i {
                let d = x.distance(i, j);
                if d > 0.0 {
                    b[j] = -delta[j] / d;
                }
                diag -= b[j];
            }
        }
        b[i] = diag;
        for k in 0..dims {
            let mut acc = 0.0;
            for (j, &bij) in b.iter().enumerate() {
                acc += bij * x.coords[j * dims + k];
            }
            let v = acc / n as f64;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "coordinate {k} of point {i} became {v}"
                )));
            }
            out.push(v);
        }
    }
    Ok(out)
}

/// Squared-error contribution of each owned row: `Σ_{j>i} (δ_ij - d_ij)²`.
pub fn row_stress(block: &DistanceBlock, x: &Embedding) -> Vec<f64> {
    (block.lo..block.hi)
        .map(|i| {
            let delta = block.row(i);
            ((i + 1)..block.n)
                .map(|j| (delta[j] - x.distance(i, j)).powi(2))
                .sum()
        })
        .collect()
}

/// Global stress `Σ_{i<j} (δ_ij - d_ij)²`. Per-row partials are placed in an
/// `n`-vector and summed by allreduce, then added up in row order, so the
/// value does not depend on how rows are split across ranks.
pub fn stress(ctx: &mut WorkerContext, block: &DistanceBlock, x: &Embedding) -> Result<f64> {
    let mut rows = vec![0.0; block.n];
    rows[block.lo..block.hi].copy_from_slice(&row_stress(block, x));
    let total = allreduce(ctx.comm_mut(), &NumericArray::Float64(rows), ReduceOp::Sum)?;
    Ok(total.as_f64().expect("f64").iter().sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdsResult {
    pub embedding: Embedding,
    /// Stress after each iteration.
    pub history: Vec<f64>,
}

/// Embed the rows of a row-partitioned point table into `dims` dimensions.
/// Stops after `iters` iterations or once the relative stress decrease falls
/// below `tol`. The result is replicated on every rank.
pub fn run_mds(
    ctx: &mut WorkerContext,
    points: &Table,
    feature_columns: &[&str],
    dims: usize,
    iters: usize,
    tol: f64,
) -> Result<MdsResult> {
    if iters == 0 || dims == 0 {
        return Err(Error::InvalidArgument(
            "iterations and dimensions must be at least 1".into(),
        ));
    }
    let block = compute_distance_block(ctx, points, feature_columns)?;
    let mut x = Embedding::random(block.n, dims, ctx.seed());
    let mut history: Vec<f64> = Vec::with_capacity(iters);
    for _ in 0..iters {
        let rows = smacof_step(&block, &x);
        x = Embedding::new(block.n, dims, allgather_checked(ctx, rows)?)?;
        let s = stress(ctx, &block, &x)?;
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("stress became {s}")));
        }
        let prev = history.last().copied();
        history.push(s);
        if let Some(p) = prev {
            if p <= 0.0 || (p - s) / p < tol {
                break;
            }
        }
        if s == 0.0 {
            break;
        }
    }
    Ok(MdsResult {
        embedding: x,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::columnar::{ColumnArray, DataType, Schema};
    use crate::dist::testutil::run_parts;

    fn points(xs: &[f64], ys: &[f64]) -> Table {
        Table::new(
            Schema::of(&[("x", DataType::Float64), ("y", DataType::Float64)]).unwrap(),
            vec![ColumnArray::from_f64(xs), ColumnArray::from_f64(ys)],
        )
        .unwrap()
    }

    #[test]
    fn row_ranges_tile() {
        for n in 0..20 {
            for w in 1..6 {
                let mut next = 0;
                for r in 0..w {
                    let (lo, hi) = row_range(n, w, r);
                    assert_eq!(lo, next);
                    assert!(hi - lo == n / w || hi - lo == n / w + 1);
                    next = hi;
                }
                assert_eq!(next, n);
            }
        }
    }

    #[test]
    fn three_four_five() {
        let out = run_parts(&[points(&[0.0, 3.0], &[0.0, 4.0])], |ctx, p| {
            compute_distance_block(ctx, &p, &["x", "y"])
        });
        assert_eq!(out[0].values, vec![0.0, 5.0, 5.0, 0.0]);
    }

    #[test]
    fn blocks_stack_across_worlds() {
        let xs: Vec<f64> = (0..7).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = (0..7).map(|i| (i * i) as f64).collect();
        let whole = run_parts(&[points(&xs, &ys)], |ctx, p| {
            compute_distance_block(ctx, &p, &["x", "y"])
        });
        let parts = vec![
            points(&xs[..2], &ys[..2]),
            points(&xs[2..3], &ys[2..3]),
            points(&[], &[]),
            points(&xs[3..], &ys[3..]),
        ];
        let split = run_parts(&parts, |ctx, p| {
            compute_distance_block(ctx, &p, &["x", "y"])
        });
        let stacked: Vec<f64> = split.iter().flat_map(|b| b.values.clone()).collect();
        assert_eq!(stacked, whole[0].values);
    }

    #[test]
    fn null_feature_fails_on_every_rank() {
        let bad = Table::new(
            Schema::of(&[("x", DataType::Float64)]).unwrap(),
            vec![ColumnArray::from_opt_f64(&[None])],
        )
        .unwrap();
        let good = Table::new(
            Schema::of(&[("x", DataType::Float64)]).unwrap(),
            vec![ColumnArray::from_f64(&[1.0])],
        )
        .unwrap();
        let parts = [good, bad];
        let res =
            crate::comm::launch_inproc_with(&crate::comm::TransportConfig::inproc(2), |comm| {
                let part = parts[comm.rank()].clone();
                let mut ctx = WorkerContext::new(comm);
                compute_distance_block(&mut ctx, &part, &["x"])
            })
            .unwrap();
        assert!(res.iter().all(|r| r.is_err()));
    }

    #[test]
    fn centered_perfect_embedding_is_fixed() {
        let x = Embedding::new(3, 2, vec![-1.0, -1.0, 2.0, 0.0, -1.0, 1.0]).unwrap();
        let mut values = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                values.push(x.distance(i, j));
            }
        }
        let block = DistanceBlock {
            rank: 0,
            n: 3,
            lo: 0,
            hi: 3,
            values,
        };
        let next = smacof_step(&block, &x).unwrap();
        for (a, b) in next.iter().zip(&x.coords) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn coincident_points_do_not_divide_by_zero() {
        let x = Embedding::new(2, 1, vec![0.5, 0.5]).unwrap();
        let block = DistanceBlock {
            rank: 0,
            n: 2,
            lo: 0,
            hi: 2,
            values: vec![0.0, 1.0, 1.0, 0.0],
        };
        assert_eq!(smacof_step(&block, &x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn one_iteration_one_entry() {
        let out = run_parts(&[points(&[0.0, 1.0, 3.0], &[0.0, 1.0, 0.0])], |ctx, p| {
            run_mds(ctx, &p, &["x", "y"], 2, 1, 0.0)
        });
        assert_eq!(out[0].history.len(), 1);
    }

    #[test]
    fn collinear_triple_converges() {
        let t = Table::new(
            Schema::of(&[("x", DataType::Float64)]).unwrap(),
            vec![ColumnArray::from_f64(&[0.0, 1.0, 2.0])],
        )
        .unwrap();
        let out = run_parts(&[t], |ctx, p| run_mds(ctx, &p, &["x"], 1, 200, 0.0));
        let res = &out[0];
        assert!(*res.history.last().unwrap() < 1e-6, "{:?}", res.history);
        let mut c: Vec<f64> = res.embedding.coords.clone();
        c.sort_by(f64::total_cmp);
        assert!(
            (c[1] - c[0] - 1.0).abs() < 1e-3 && (c[2] - c[1] - 1.0).abs() < 1e-3,
            "{c:?}"
        );
    }
}

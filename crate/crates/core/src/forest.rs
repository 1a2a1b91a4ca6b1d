//! Regression forests and permutation importance.
//!
//! Trees are grown CART-style on bootstrap bags by minimizing the residual
//! sum of squares over midpoint thresholds. Importance is the mean over
//! trees of the out-of-bag increase in squared error after permuting one
//! variable, either freely (traditional) or within the blocks cut by the
//! tree's own thresholds on the other variables (conditional).

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::RasterField;
use crate::ingest::{EventPattern, TemporalCovariates};
use crate::io::write_atomic;
use crate::{par, rng};

/// Explanatory columns and a response.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTable {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    y: Vec<f64>,
}

impl TrainingTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        if columns.is_empty() || names.len() != columns.len() {
            return Err(Error::InvalidParameter(format!(
                "{} names for {} columns; at least one column required",
                names.len(),
                columns.len()
            )));
        }
        if y.len() < 2 {
            return Err(Error::InvalidParameter(format!("{} rows; at least 2 required", y.len())));
        }
        for c in &columns {
            if c.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: y.len(),
                    got: c.len(),
                });
            }
        }
        if columns.iter().flatten().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("missing or non-finite value".into()));
        }
        Ok(Self { names, columns, y })
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    /// Explanatory columns plus the response.
    pub fn n_columns(&self) -> usize {
        self.n_vars() + 1
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    /// Rows where `keep` is true.
    pub fn filter_rows(&self, keep: &[bool]) -> Result<Self> {
        let pick = |v: &[f64]| v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect::<Vec<_>>();
        Self::new(self.names.clone(), self.columns.iter().map(|c| pick(c)).collect(), pick(&self.y))
    }
}

fn variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { var: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    /// Bootstrap multiset.
    pub bag: Vec<usize>,
    /// Rows absent from the bag, ascending.
    pub oob: Vec<usize>,
}

impl Tree {
    fn predict_with(&self, get: impl Fn(usize) -> f64) -> f64 {
        let mut n = 0;
        loop {
            match self.nodes[n] {
                Node::Leaf { value } => return value,
                Node::Split { var, threshold, left, right } => {
                    n = if get(var) <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.predict_with(|j| x[j])
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Thresholds used on each of `m` variables, sorted and deduplicated.
    pub fn thresholds(&self, m: usize) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); m];
        for n in &self.nodes {
            if let Node::Split { var, threshold, .. } = *n {
                out[var].push(threshold);
            }
        }
        for t in &mut out {
            t.sort_by(f64::total_cmp);
            t.dedup();
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub mtry: usize,
    pub min_node_size: usize,
}

impl ForestConfig {
    /// `mtry = max(1, ⌊m/3⌋)`, 500 trees, minimum node size 5.
    pub fn for_vars(m: usize) -> Self {
        Self {
            n_trees: 500,
            mtry: (m / 3).max(1),
            min_node_size: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub config: ForestConfig,
    pub seed: u64,
}

struct Grower<'a> {
    table: &'a TrainingTable,
    mtry: usize,
    min_node_size: usize,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], rng: &mut impl Rng) -> usize {
        let ys: Vec<f64> = idx.iter().map(|&i| self.table.y[i]).collect();
        let mean = ys.iter().sum::<f64>() / ys.len() as f64;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });
        if idx.len() < self.min_node_size || idx.len() < 2 || ys.iter().all(|&v| v == ys[0]) {
            return id;
        }
        let vars: Vec<usize> = (0..self.table.n_vars()).collect();
        let candidates: Vec<usize> = vars.choose_multiple(rng, self.mtry).copied().collect();
        let mut best: Option<(f64, usize, f64)> = None;
        for &var in &candidates {
            if let Some((rss, threshold)) = best_split(self.table.column(var), &self.table.y, idx) {
                let better = match best {
                    None => true,
                    Some((brss, _, bthr)) => rss < brss || (rss == brss && threshold < bthr),
                };
                if better {
                    best = Some((rss, var, threshold));
                }
            }
        }
        let Some((_, var, threshold)) = best else {
            return id;
        };
        let col = self.table.column(var);
        idx.sort_by(|&a, &b| (col[a] > threshold).cmp(&(col[b] > threshold)));
        let cut = idx.partition_point(|&i| col[i] <= threshold);
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id] = Node::Split { var, threshold, left, right };
        id
    }
}

/// Best RSS split of `idx` on one column: (RSS, midpoint threshold).
fn best_split(x: &[f64], y: &[f64], idx: &[usize]) -> Option<(f64, f64)> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let n = order.len();
    let total: f64 = order.iter().map(|&i| y[i]).sum();
    let total_sq: f64 = order.iter().map(|&i| y[i] * y[i]).sum();
    let (mut s, mut sq) = (0.0, 0.0);
    let mut best: Option<(f64, f64)> = None;
    for p in 0..n - 1 {
        let yi = y[order[p]];
        s += yi;
        sq += yi * yi;
        let (a, b) = (x[order[p]], x[order[p + 1]]);
        if a == b {
            continue;
        }
        let nl = (p + 1) as f64;
        let nr = (n - p - 1) as f64;
        let rss = (sq - s * s / nl) + ((total_sq - sq) - (total - s).powi(2) / nr);
        if best.is_none_or(|(br, _)| rss < br) {
            best = Some((rss, 0.5 * (a + b)));
        }
    }
    best
}

/// Grows `n_trees` trees on bootstrap bags of size `n`.
pub fn fit_forest(table: &TrainingTable, config: ForestConfig, seed: u64) -> Result<Forest> {
    if config.mtry == 0 || config.mtry > table.n_vars() {
        return Err(Error::InvalidParameter(format!(
            "mtry = {} not in 1..={}",
            config.mtry,
            table.n_vars()
        )));
    }
    if config.n_trees == 0 || config.min_node_size == 0 {
        return Err(Error::InvalidParameter("n_trees and min_node_size must be positive".into()));
    }
    let n = table.n_rows();
    let trees = par::map_range(config.n_trees, |t| {
        let mut rng = rng::stream(seed, &[rng::tag::FOREST, t as u64]);
        let bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut in_bag = vec![false; n];
        for &i in &bag {
            in_bag[i] = true;
        }
        let oob = (0..n).filter(|&i| !in_bag[i]).collect();
        let mut g = Grower {
            table,
            mtry: config.mtry,
            min_node_size: config.min_node_size,
            nodes: Vec::new(),
        };
        let mut idx = bag.clone();
        g.grow(&mut idx, &mut rng);
        Tree { nodes: g.nodes, bag, oob }
    });
    Ok(Forest { trees, config, seed })
}

impl Forest {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Out-of-bag predictions; `None` for rows in every bag.
    pub fn oob_predictions(&self, table: &TrainingTable) -> Vec<Option<f64>> {
        let mut sum = vec![0.0; table.n_rows()];
        let mut count = vec![0usize; table.n_rows()];
        for t in &self.trees {
            for &i in &t.oob {
                sum[i] += t.predict_with(|j| table.columns[j][i]);
                count[i] += 1;
            }
        }
        sum.iter().zip(&count).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect()
    }

    /// `1 − MSE_oob / Var(y)` over rows with an out-of-bag prediction.
    pub fn oob_r2(&self, table: &TrainingTable) -> f64 {
        let (mut se, mut ys) = (0.0, Vec::new());
        for (p, &y) in self.oob_predictions(table).iter().zip(&table.y) {
            if let Some(p) = p {
                se += (y - p).powi(2);
                ys.push(y);
            }
        }
        if ys.is_empty() {
            return f64::NAN;
        }
        1.0 - se / ys.len() as f64 / variance(&ys)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    Traditional,
    Conditional,
}

impl ImportanceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Traditional => "traditional",
            Self::Conditional => "conditional",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores {
    pub mode: ImportanceMode,
    pub names: Vec<String>,
    pub scores: Vec<f64>,
}

/// Mean squared-error increase on out-of-bag rows `oob` of one tree when
/// variable `j` takes the values of rows `perm` (a rearrangement of `oob`).
pub fn tree_importance(tree: &Tree, table: &TrainingTable, j: usize, perm: &[usize]) -> f64 {
    if tree.oob.is_empty() {
        return 0.0;
    }
    let mut delta = 0.0;
    for (&i, &p) in tree.oob.iter().zip(perm) {
        let y = table.y[i];
        let base = tree.predict_with(|v| table.columns[v][i]);
        let permuted = tree.predict_with(|v| if v == j { table.columns[j][p] } else { table.columns[v][i] });
        delta += (y - permuted).powi(2) - (y - base).powi(2);
    }
    delta / tree.oob.len() as f64
}

/// Out-of-bag positions grouped by the cells of the tree's thresholds on
/// every variable except `j`. Groups keep out-of-bag order.
fn conditioning_blocks(tree: &Tree, table: &TrainingTable, j: usize) -> Vec<Vec<usize>> {
    let cuts = tree.thresholds(table.n_vars());
    let mut blocks: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for (pos, &i) in tree.oob.iter().enumerate() {
        let key: Vec<usize> = cuts
            .iter()
            .enumerate()
            .filter(|(v, c)| *v != j && !c.is_empty())
            .map(|(v, c)| c.partition_point(|&thr| thr < table.columns[v][i]))
            .collect();
        blocks.entry(key).or_default().push(pos);
    }
    blocks.into_values().collect()
}

fn permutation(tree: &Tree, table: &TrainingTable, j: usize, mode: ImportanceMode, seed: u64, t: usize) -> Vec<usize> {
    let mut rng = rng::stream(seed, &[rng::tag::IMPORTANCE, t as u64, j as u64]);
    let blocks = match mode {
        ImportanceMode::Traditional => vec![(0..tree.oob.len()).collect()],
        ImportanceMode::Conditional => conditioning_blocks(tree, table, j),
    };
    let mut perm = tree.oob.clone();
    for block in blocks {
        let mut members: Vec<usize> = block.iter().map(|&p| tree.oob[p]).collect();
        members.shuffle(&mut rng);
        for (&p, m) in block.iter().zip(members) {
            perm[p] = m;
        }
    }
    perm
}

/// Mean over trees of the out-of-bag error increase per variable.
pub fn importance(forest: &Forest, table: &TrainingTable, mode: ImportanceMode, seed: u64) -> ImportanceScores {
    let m = table.n_vars();
    let per_tree = par::map_slice(
        &forest.trees.iter().enumerate().collect::<Vec<_>>(),
        |&(t, tree)| -> Vec<f64> {
            (0..m)
                .map(|j| tree_importance(tree, table, j, &permutation(tree, table, j, mode, seed, t)))
                .collect()
        },
    );
    let mut scores = vec![0.0; m];
    for row in &per_tree {
        for (s, v) in scores.iter_mut().zip(row) {
            *s += v;
        }
    }
    let n = forest.trees.len() as f64;
    ImportanceScores {
        mode,
        names: table.names.clone(),
        scores: scores.iter().map(|s| s / n).collect(),
    }
}

pub fn traditional_importance(forest: &Forest, table: &TrainingTable, seed: u64) -> ImportanceScores {
    importance(forest, table, ImportanceMode::Traditional, seed)
}

pub fn conditional_importance(forest: &Forest, table: &TrainingTable, seed: u64) -> ImportanceScores {
    importance(forest, table, ImportanceMode::Conditional, seed)
}

/// CSV `variable,mode,score` with rows sorted by score, descending.
pub fn format_importance(reports: &[ImportanceScores]) -> String {
    let mut out = String::from("variable,mode,score\n");
    for r in reports {
        let mut rows: Vec<(&String, f64)> = r.names.iter().zip(r.scores.iter().copied()).collect();
        rows.sort_by(|a, b| b.1.total_cmp(&a.1));
        for (name, score) in rows {
            out.push_str(&format!("{name},{},{}\n", r.mode.as_str(), crate::io::fmt_f64(score)));
        }
    }
    out
}

pub fn write_importance(path: impl AsRef<Path>, reports: &[ImportanceScores]) -> Result<()> {
    write_atomic(path.as_ref(), format_importance(reports).as_bytes())
}

/// Box-level training table and the flag of boxes touching the window edge.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialTable {
    pub table: TrainingTable,
    /// Per row: box is clipped by the grid edge or contains masked-out cells.
    pub boundary: Vec<bool>,
    /// Per row: (box column, box row).
    pub boxes: Vec<(usize, usize)>,
}

impl SpatialTable {
    pub fn interior(&self) -> Result<TrainingTable> {
        let keep: Vec<bool> = self.boundary.iter().map(|b| !b).collect();
        self.table.filter_rows(&keep)
    }
}

/// One row per box of `box_cells × box_cells` grid cells holding at least
/// one window cell: the event count as response and the mean of each
/// raster over the box's window cells as covariates.
pub fn build_spatial_table(events: &EventPattern, rasters: &[(String, RasterField)], box_cells: usize) -> Result<SpatialTable> {
    let grid = events.window();
    if box_cells == 0 {
        return Err(Error::InvalidParameter("box size must be at least one cell".into()));
    }
    for (name, r) in rasters {
        if r.grid() != grid {
            return Err(Error::GridMismatch(format!("raster {name} is not on the event window grid")));
        }
    }
    let bx = grid.ncols.div_ceil(box_cells);
    let by = grid.nrows.div_ceil(box_cells);
    let box_of = |c: usize| {
        let (col, row) = grid.col_row(c);
        (row / box_cells) * bx + col / box_cells
    };
    let mut n_cells = vec![0usize; bx * by];
    let mut sums = vec![vec![0.0; bx * by]; rasters.len()];
    for c in grid.masked_cells() {
        let b = box_of(c);
        n_cells[b] += 1;
        for (s, (_, r)) in sums.iter_mut().zip(rasters) {
            s[b] += r.get(c);
        }
    }
    let mut counts = vec![0.0; bx * by];
    for (c, n) in events.counts_per_cell().iter().enumerate() {
        counts[box_of(c)] += *n as f64;
    }
    let full = box_cells * box_cells;
    let rows: Vec<usize> = (0..bx * by).filter(|&b| n_cells[b] > 0).collect();
    let columns = sums
        .iter()
        .map(|s| rows.iter().map(|&b| s[b] / n_cells[b] as f64).collect())
        .collect();
    let table = TrainingTable::new(
        rasters.iter().map(|(n, _)| n.clone()).collect(),
        columns,
        rows.iter().map(|&b| counts[b]).collect(),
    )?;
    Ok(SpatialTable {
        table,
        boundary: rows.iter().map(|&b| n_cells[b] < full).collect(),
        boxes: rows.iter().map(|&b| (b % bx, b / bx)).collect(),
    })
}

/// One row per day: daily event count against the daily covariates.
pub fn build_temporal_table(daily_counts: &[f64], cov: &TemporalCovariates) -> Result<TrainingTable> {
    if daily_counts.len() != cov.t_len() {
        return Err(Error::DimensionMismatch {
            expected: cov.t_len(),
            got: daily_counts.len(),
        });
    }
    let cols = cov.columns();
    TrainingTable::new(
        cols.iter().map(|(n, _)| n.to_string()).collect(),
        cols.iter().map(|(_, v)| v.to_vec()).collect(),
        daily_counts.to_vec(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::SpatialGrid;
    use rand::SeedableRng;

    fn table(n: usize, f: impl Fn(&[f64]) -> f64, m: usize, seed: u64) -> TrainingTable {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| r.random::<f64>()).collect()).collect();
        let y = (0..n).map(|i| f(&cols.iter().map(|c| c[i]).collect::<Vec<_>>())).collect();
        TrainingTable::new((1..=m).map(|j| format!("x{j}")).collect(), cols, y).unwrap()
    }

    #[test]
    fn identity_response_is_learned() {
        let t = table(100, |x| x[0], 3, 1);
        let f = fit_forest(&t, ForestConfig { n_trees: 200, mtry: 2, min_node_size: 5 }, 7).unwrap();
        assert!(f.oob_r2(&t) > 0.9, "{}", f.oob_r2(&t));
        let imp = traditional_importance(&f, &t, 3);
        let best = imp.scores.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(imp.scores[0], best);
    }

    #[test]
    fn constant_response_gives_single_leaves() {
        let mut t = table(50, |_| 3.5, 2, 2);
        t.y = vec![3.5; 50];
        let f = fit_forest(&t, ForestConfig { n_trees: 10, mtry: 1, min_node_size: 2 }, 1).unwrap();
        for tree in &f.trees {
            assert_eq!(tree.n_leaves(), 1);
            assert_eq!(tree.predict(&[0.1, 0.9]), 3.5);
        }
    }

    #[test]
    fn oob_disjoint_from_bag_and_leaf_means() {
        let t = table(60, |x| x[0] + 2.0 * x[1], 2, 3);
        let f = fit_forest(&t, ForestConfig { n_trees: 5, mtry: 2, min_node_size: 1 }, 4).unwrap();
        for tree in &f.trees {
            assert!(tree.oob.iter().all(|i| !tree.bag.contains(i)));
            // Fully grown trees reproduce in-bag responses for distinct rows.
            for &i in &tree.bag {
                assert!((tree.predict(&t.row(i)) - t.y[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_permutation_gives_zero() {
        let t = table(80, |x| x[0], 2, 5);
        let f = fit_forest(&t, ForestConfig { n_trees: 3, mtry: 1, min_node_size: 5 }, 5).unwrap();
        for tree in &f.trees {
            assert_eq!(tree_importance(tree, &t, 0, &tree.oob), 0.0);
        }
    }

    #[test]
    fn single_variable_conditional_equals_traditional() {
        let t = table(80, |x| x[0] * x[0], 1, 6);
        let f = fit_forest(&t, ForestConfig { n_trees: 30, mtry: 1, min_node_size: 5 }, 6).unwrap();
        let a = traditional_importance(&f, &t, 9);
        let b = conditional_importance(&f, &t, 9);
        assert_eq!(a.scores, b.scores);
    }

    #[test]
    fn seed_fixes_everything() {
        let t = table(70, |x| x[0] - x[2], 3, 8);
        let cfg = ForestConfig { n_trees: 20, mtry: 2, min_node_size: 5 };
        let (f1, f2) = (fit_forest(&t, cfg, 1).unwrap(), fit_forest(&t, cfg, 1).unwrap());
        assert_eq!(f1.trees, f2.trees);
        assert_eq!(conditional_importance(&f1, &t, 2), conditional_importance(&f2, &t, 2));
    }

    #[test]
    fn invalid_mtry_rejected() {
        let t = table(10, |x| x[0], 2, 1);
        assert!(fit_forest(&t, ForestConfig { n_trees: 1, mtry: 3, min_node_size: 5 }, 1).is_err());
        assert!(fit_forest(&t, ForestConfig { n_trees: 1, mtry: 0, min_node_size: 5 }, 1).is_err());
    }

    #[test]
    fn csv_sorted_descending() {
        let s = ImportanceScores {
            mode: ImportanceMode::Conditional,
            names: vec!["a".into(), "b".into()],
            scores: vec![0.5, 2.0],
        };
        assert_eq!(format_importance(&[s]), "variable,mode,score\nb,conditional,2.0\na,conditional,0.5\n");
    }

    #[test]
    fn spatial_table_shape() {
        // 9 × 699 boxes of one cell each and 22 covariate rasters.
        let g = SpatialGrid::new(9, 699, 0.0, 0.0, 100.0).unwrap();
        let rasters: Vec<(String, RasterField)> = (0..22)
            .map(|j| (format!("s{j}"), RasterField::from_fn(&g, move |x, y| x * j as f64 + y)))
            .collect();
        let st = build_spatial_table(&EventPattern::empty(&g, 10), &rasters, 1).unwrap();
        assert_eq!((st.table.n_rows(), st.table.n_columns()), (6291, 23));
        assert!(st.table.response().iter().all(|&v| v == 0.0));
        assert!(st.boundary.iter().all(|b| !b));
    }

    #[test]
    fn spatial_boxes_aggregate_and_flag_edges() {
        let g = SpatialGrid::new(5, 4, 0.0, 0.0, 100.0).unwrap();
        let ev = EventPattern::new(
            vec![
                crate::ingest::Event { x: 50.0, y: 50.0, t: 0.0, k: 1 },
                crate::ingest::Event { x: 150.0, y: 150.0, t: 1.0, k: 2 },
                crate::ingest::Event { x: 450.0, y: 50.0, t: 1.0, k: 2 },
            ],
            &g,
            2,
        )
        .unwrap();
        let r = RasterField::from_fn(&g, |x, _| x);
        let st = build_spatial_table(&ev, &[("x".into(), r)], 2).unwrap();
        assert_eq!(st.table.n_rows(), 6);
        assert_eq!(st.table.response()[0], 2.0);
        assert_eq!(st.table.column(0)[0], 100.0);
        assert_eq!(st.boxes[2], (2, 0));
        assert_eq!(st.boundary, vec![false, false, true, false, false, true]);
        assert_eq!(st.interior().unwrap().n_rows(), 4);
    }

    #[test]
    fn temporal_table_shape() {
        let n = 6205;
        let cov = TemporalCovariates::with_computed_wind_chill(
            vec![10.0; n],
            vec![3.0; n],
            Some(vec![1.0; n]),
            Some(vec![20.0; n]),
        )
        .unwrap();
        let t = build_temporal_table(&vec![0.0; n], &cov).unwrap();
        assert_eq!((t.n_rows(), t.n_columns()), (6205, 6));
        assert!(build_temporal_table(&vec![0.0; n - 1], &cov).is_err());
    }
}

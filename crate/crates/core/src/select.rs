//! Weight matrices, attributed graph selection and comparison with ground truth.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::regress::NodewiseFitSet;

/// Attribute of a present edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    TimeInvariant,
    TimeVarying,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::TimeInvariant => "time_invariant",
            EdgeKind::TimeVarying => "time_varying",
        }
    }
}

/// Undirected graph on `p` nodes with stationary / nonstationary self-loops
/// and time-invariant / time-varying edges. Pairs are stored as `(min, max)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonStGraph {
    p: usize,
    nonstationary: Vec<bool>,
    edges: BTreeMap<(usize, usize), EdgeKind>,
}

impl NonStGraph {
    /// Empty graph with all nodes stationary.
    pub fn new(p: usize) -> Self {
        NonStGraph {
            p,
            nonstationary: vec![false; p],
            edges: BTreeMap::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn set_nonstationary(&mut self, a: usize, flag: bool) {
        self.nonstationary[a] = flag;
    }

    pub fn is_nonstationary(&self, a: usize) -> bool {
        self.nonstationary[a]
    }

    /// Adds (or overwrites) the edge `{a, b}`; self-pairs are ignored.
    pub fn add_edge(&mut self, a: usize, b: usize, kind: EdgeKind) {
        assert!(a < self.p && b < self.p, "node index out of range");
        if a != b {
            self.edges.insert((a.min(b), a.max(b)), kind);
        }
    }

    pub fn edge(&self, a: usize, b: usize) -> Option<EdgeKind> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    /// Edges in canonical `(min, max)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, EdgeKind)> + '_ {
        self.edges.iter().map(|(&(a, b), &k)| (a, b, k))
    }

    pub fn degree(&self, a: usize) -> usize {
        self.edges.keys().filter(|&&(x, y)| x == a || y == a).count()
    }

    /// Writes the adjacency-list text format:
    ///
    /// ```text
    /// p 4
    /// node 1 nonstationary
    /// node 2 stationary
    /// edge 1 2 time_invariant
    /// ```
    ///
    /// Labels are one-based; lines starting with `#` are comments.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# nonstationary graph: node self-loop and edge attributes")?;
        writeln!(w, "p {}", self.p)?;
        for a in 0..self.p {
            let s = if self.nonstationary[a] {
                "nonstationary"
            } else {
                "stationary"
            };
            writeln!(w, "node {} {s}", a + 1)?;
        }
        for (a, b, k) in self.edges() {
            writeln!(w, "edge {} {} {}", a + 1, b + 1, k.as_str())?;
        }
        Ok(())
    }

    pub fn read_text<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        s.parse()
    }
}

impl fmt::Display for NonStGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_text(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

impl FromStr for NonStGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut g: Option<NonStGraph> = None;
        let bad = |line: &str| Error::Parse(format!("bad graph line: {line:?}"));
        for line in s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let f: Vec<&str> = line.split_whitespace().collect();
            let idx = |i: usize, p: usize| -> Result<usize> {
                let v: usize = f.get(i).and_then(|x| x.parse().ok()).ok_or_else(|| bad(line))?;
                if v == 0 || v > p {
                    return Err(bad(line));
                }
                Ok(v - 1)
            };
            match (f[0], g.as_mut()) {
                ("p", None) if f.len() == 2 => {
                    g = Some(NonStGraph::new(f[1].parse().map_err(|_| bad(line))?));
                }
                ("node", Some(g)) if f.len() == 3 => {
                    let a = idx(1, g.p)?;
                    match f[2] {
                        "stationary" => g.nonstationary[a] = false,
                        "nonstationary" => g.nonstationary[a] = true,
                        _ => return Err(bad(line)),
                    }
                }
                ("edge", Some(g)) if f.len() == 4 => {
                    let (a, b) = (idx(1, g.p)?, idx(2, g.p)?);
                    let kind = match f[3] {
                        "time_invariant" => EdgeKind::TimeInvariant,
                        "time_varying" => EdgeKind::TimeVarying,
                        _ => return Err(bad(line)),
                    };
                    if a == b {
                        return Err(bad(line));
                    }
                    g.add_edge(a, b, kind);
                }
                _ => return Err(bad(line)),
            }
        }
        g.ok_or_else(|| Error::Parse("missing `p` line".into()))
    }
}

/// Aggregated squared coefficient moduli.
///
/// `w_self[(a, b)] = Σ_k |B̂_{(b,k)→(a,k)}|²` and
/// `w_other[(a, b)] = Σ_k Σ_{0<|r|≤ν} |B̂_{(b,k+r)→(a,k)}|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrices {
    pub w_self: DMatrix<f64>,
    pub w_other: DMatrix<f64>,
    /// Frequency indices (one-based) the sums run over.
    pub frequencies: Vec<usize>,
}

impl WeightMatrices {
    pub fn p(&self) -> usize {
        self.w_self.nrows()
    }

    /// `W_self + W_other`, the edge score matrix.
    pub fn combined(&self) -> DMatrix<f64> {
        &self.w_self + &self.w_other
    }

    /// Entrywise mean of several weight matrices of equal dimension.
    pub fn average(items: &[WeightMatrices]) -> Result<WeightMatrices> {
        let first = items.first().ok_or(Error::EmptyFitSet)?;
        let p = first.p();
        if items.iter().any(|w| w.p() != p) {
            return Err(Error::ShapeMismatch("weight matrices differ in dimension".into()));
        }
        let m = items.len() as f64;
        let mut out = WeightMatrices {
            w_self: DMatrix::zeros(p, p),
            w_other: DMatrix::zeros(p, p),
            frequencies: first.frequencies.clone(),
        };
        for w in items {
            out.w_self += &w.w_self / m;
            out.w_other += &w.w_other / m;
        }
        Ok(out)
    }
}

/// Aggregates node-wise fits into `W_self` and `W_other`.
pub fn weight_matrices(fits: &NodewiseFitSet) -> Result<WeightMatrices> {
    if fits.fits.is_empty() {
        return Err(Error::EmptyFitSet);
    }
    let p = fits.p;
    let nu = fits.nu as i64;
    let mut w_self = DMatrix::zeros(p, p);
    let mut w_other = DMatrix::zeros(p, p);
    let mut freqs: Vec<usize> = fits.fits.iter().map(|f| f.k).collect();
    freqs.sort_unstable();
    freqs.dedup();
    for fit in &fits.fits {
        let a = fit.a;
        for r in -nu..=nu {
            for b in 0..p {
                let m = fits.coefficient(fit, b, r).norm_sqr();
                if r == 0 {
                    if b != a {
                        w_self[(a, b)] += m;
                    }
                } else {
                    w_other[(a, b)] += m;
                }
            }
        }
    }
    Ok(WeightMatrices {
        w_self,
        w_other,
        frequencies: freqs,
    })
}

/// How the two orientations `W[a][b]`, `W[b][a]` are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    And,
    Or,
}

impl FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "and" => Ok(Rule::And),
            "or" => Ok(Rule::Or),
            _ => Err(Error::Parse(format!("unknown rule {s:?} (expected and/or)"))),
        }
    }
}

impl Rule {
    fn combine(self, x: f64, y: f64) -> f64 {
        match self {
            Rule::And => x.min(y),
            Rule::Or => x.max(y),
        }
    }
}

/// A selection threshold: explicit, or the data-driven rank gap.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum Threshold {
    Value(f64),
    #[default]
    RankGap,
}

/// Rank-gap threshold: sorts the values and cuts at the largest ratio
/// between consecutive values, after adding a floor of 1% of the maximum so
/// that near-zero noise values cannot produce spurious huge ratios. The
/// returned threshold lies strictly between the two values at the cut; it is
/// `0` for all-zero input and the maximum when all values coincide.
pub fn rank_gap_threshold(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    v.sort_by(f64::total_cmp);
    let max = v.last().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return 0.0;
    }
    let floor = 0.01 * max;
    let mut best = (1.0, None);
    for i in 0..v.len() - 1 {
        let ratio = (v[i + 1] + floor) / (v[i] + floor);
        if ratio > best.0 {
            best = (ratio, Some(i));
        }
    }
    match best.1 {
        Some(i) => ((v[i] + floor) * (v[i + 1] + floor)).sqrt() - floor,
        None => max,
    }
}

/// Builds the attributed graph from weight matrices.
///
/// Edge `{a, b}` is present iff the rule-combined value of
/// `(W_self + W_other)[a][b]` and `[b][a]` exceeds the edge threshold; a
/// present edge is time-varying iff the combined `W_other` value exceeds the
/// nonstationarity threshold; node `a` is nonstationary iff
/// `W_other[a][a]` exceeds it. With [`Threshold::RankGap`] the edge
/// threshold is computed over all pair scores and the nonstationarity
/// threshold over the diagonal of `W_other` together with the `W_other`
/// scores of present edges.
pub fn select_graph(w: &WeightMatrices, rule: Rule, edge_threshold: Threshold, ns_threshold: Threshold) -> NonStGraph {
    let p = w.p();
    let comb = w.combined();
    let mut pairs = Vec::new();
    for a in 0..p {
        for b in a + 1..p {
            pairs.push((a, b, rule.combine(comb[(a, b)], comb[(b, a)])));
        }
    }
    let et = match edge_threshold {
        Threshold::Value(t) => t,
        Threshold::RankGap => rank_gap_threshold(&pairs.iter().map(|x| x.2).collect::<Vec<_>>()),
    };
    let present: Vec<(usize, usize, f64)> = pairs
        .into_iter()
        .filter(|x| x.2 > et)
        .map(|(a, b, _)| (a, b, rule.combine(w.w_other[(a, b)], w.w_other[(b, a)])))
        .collect();
    let nt = match ns_threshold {
        Threshold::Value(t) => t,
        Threshold::RankGap => {
            let mut cand: Vec<f64> = (0..p).map(|a| w.w_other[(a, a)]).collect();
            cand.extend(present.iter().map(|x| x.2));
            rank_gap_threshold(&cand)
        }
    };
    let mut g = NonStGraph::new(p);
    for a in 0..p {
        g.set_nonstationary(a, w.w_other[(a, a)] > nt);
    }
    for (a, b, other) in present {
        let kind = if other > nt {
            EdgeKind::TimeVarying
        } else {
            EdgeKind::TimeInvariant
        };
        g.add_edge(a, b, kind);
    }
    g
}

/// Agreement between an estimated and a true graph.
///
/// Ratios with an empty denominator are reported as 1.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphMetrics {
    pub edge_precision: f64,
    pub edge_recall: f64,
    pub self_loop_accuracy: f64,
    pub edge_attribute_accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

pub fn compare_graphs(est: &NonStGraph, truth: &NonStGraph) -> Result<GraphMetrics> {
    if est.p() != truth.p() {
        return Err(Error::ShapeMismatch(format!(
            "graphs have {} and {} nodes",
            est.p(),
            truth.p()
        )));
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    let tp: Vec<(usize, usize, EdgeKind)> = est.edges().filter(|&(a, b, _)| truth.edge(a, b).is_some()).collect();
    let n_est = est.edges().count();
    let n_true = truth.edges().count();
    let attr_ok = tp.iter().filter(|&&(a, b, k)| truth.edge(a, b) == Some(k)).count();
    let loops_ok = (0..est.p())
        .filter(|&a| est.is_nonstationary(a) == truth.is_nonstationary(a))
        .count();
    Ok(GraphMetrics {
        edge_precision: ratio(tp.len(), n_est),
        edge_recall: ratio(tp.len(), n_true),
        self_loop_accuracy: ratio(loops_ok, est.p()),
        edge_attribute_accuracy: ratio(attr_ok, tp.len()),
        true_positives: tp.len(),
        false_positives: n_est - tp.len(),
        false_negatives: n_true - tp.len(),
    })
}

/// Writes a `p × p` matrix as CSV with header `b1,…,bp` (row `a` holds
/// entries `[a][·]`).
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record((1..=m.ncols()).map(|b| format!("b{b}")))?;
    for r in 0..m.nrows() {
        wr.write_record(m.row(r).iter().map(|v| format!("{v:e}")))?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_matrix_csv<R: Read>(r: R) -> Result<DMatrix<f64>> {
    let mut rd = csv::Reader::from_reader(r);
    let p = rd.headers()?.len();
    let mut vals = Vec::new();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != p {
            return Err(Error::Parse("ragged matrix CSV".into()));
        }
        for f in rec.iter() {
            vals.push(f.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, p, &vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::{NodeFit, NodewiseFitSet};
    use num_complex::Complex64;

    fn zero_fits(p: usize, n: usize, nu: usize) -> NodewiseFitSet {
        let mut fits = Vec::new();
        for a in 0..p {
            for k in 1..=n {
                fits.push(NodeFit::zero(a, k, p, nu));
            }
        }
        NodewiseFitSet { n, p, nu, m: 1, fits }
    }

    #[test]
    fn zero_fits_give_zero_weights() {
        let w = weight_matrices(&zero_fits(3, 8, 1)).unwrap();
        assert_eq!(w.w_self, DMatrix::zeros(3, 3));
        assert_eq!(w.w_other, DMatrix::zeros(3, 3));
        assert_eq!(w.frequencies, (1..=8).collect::<Vec<_>>());
    }

    #[test]
    fn single_coefficient_weight() {
        let mut fs = zero_fits(3, 8, 1);
        let idx = fs.fits.iter().position(|f| f.a == 0 && f.k == 5).unwrap();
        let slot = fs.index(1, 0);
        fs.fits[idx].coefficients[slot] = Complex64::new(3.0, 4.0);
        let w = weight_matrices(&fs).unwrap();
        assert_eq!(w.w_self[(0, 1)], 25.0);
        assert_eq!(w.w_self.sum(), 25.0);
        assert_eq!(w.w_other.sum(), 0.0);
    }

    #[test]
    fn empty_fit_set_is_an_error() {
        let fs = NodewiseFitSet {
            n: 8,
            p: 2,
            nu: 1,
            m: 1,
            fits: vec![],
        };
        assert!(matches!(weight_matrices(&fs), Err(Error::EmptyFitSet)));
    }

    fn wm(s: &[f64], o: &[f64], p: usize) -> WeightMatrices {
        WeightMatrices {
            w_self: DMatrix::from_row_slice(p, p, s),
            w_other: DMatrix::from_row_slice(p, p, o),
            frequencies: vec![],
        }
    }

    #[test]
    fn zero_weights_give_empty_graph() {
        let w = wm(&[0.0; 9], &[0.0; 9], 3);
        for rule in [Rule::And, Rule::Or] {
            let g = select_graph(&w, rule, Threshold::RankGap, Threshold::RankGap);
            assert_eq!(g, NonStGraph::new(3));
        }
    }

    #[test]
    fn zero_thresholds_give_complete_graph() {
        let w = wm(&[0.0, 1.0, 2.0, 1.0, 0.0, 3.0, 2.0, 3.0, 0.0], &[0.0; 9], 3);
        let g = select_graph(&w, Rule::And, Threshold::Value(0.0), Threshold::Value(0.0));
        assert_eq!(g.edges().count(), 3);
    }

    #[test]
    fn rank_gap_separates_clusters() {
        let t = rank_gap_threshold(&[0.1, 0.2, 0.15, 30.0, 40.0, 35.0]);
        assert!(t > 0.2 && t < 30.0);
        assert_eq!(rank_gap_threshold(&[0.0, 0.0]), 0.0);
        assert_eq!(rank_gap_threshold(&[2.0, 2.0]), 2.0);
    }

    #[test]
    fn selects_attributes() {
        #[rustfmt::skip]
        let s = [0.0, 50.0, 0.1,
                 50.0, 0.0, 0.2,
                 0.1, 0.2, 0.0];
        #[rustfmt::skip]
        let o = [30.0, 20.0, 0.0,
                 25.0, 0.3, 0.0,
                 0.0, 0.0, 0.2];
        let g = select_graph(&wm(&s, &o, 3), Rule::And, Threshold::RankGap, Threshold::RankGap);
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1, EdgeKind::TimeVarying)]);
        assert!(g.is_nonstationary(0) && !g.is_nonstationary(1) && !g.is_nonstationary(2));
    }

    #[test]
    fn metrics_of_identical_and_empty() {
        let mut t = NonStGraph::new(4);
        t.add_edge(0, 1, EdgeKind::TimeInvariant);
        t.add_edge(2, 0, EdgeKind::TimeVarying);
        t.set_nonstationary(0, true);
        let m = compare_graphs(&t, &t).unwrap();
        assert_eq!(
            (
                m.edge_precision,
                m.edge_recall,
                m.self_loop_accuracy,
                m.edge_attribute_accuracy
            ),
            (1.0, 1.0, 1.0, 1.0)
        );
        let m = compare_graphs(&NonStGraph::new(4), &t).unwrap();
        assert_eq!(m.edge_recall, 0.0);
        assert!(compare_graphs(&NonStGraph::new(3), &t).is_err());
    }

    #[test]
    fn graph_text_round_trip() {
        let mut g = NonStGraph::new(5);
        g.add_edge(4, 1, EdgeKind::TimeVarying);
        g.add_edge(0, 2, EdgeKind::TimeInvariant);
        g.set_nonstationary(3, true);
        let text = g.to_string();
        assert!(text.contains("edge 2 5 time_varying"));
        assert_eq!(text.parse::<NonStGraph>().unwrap(), g);
        assert!("p 2\nedge 1 3 time_varying".parse::<NonStGraph>().is_err());
        assert!("node 1 stationary".parse::<NonStGraph>().is_err());
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.5, 0.0, 1e-300, 7.25]);
        let mut buf = Vec::new();
        write_matrix_csv(&m, &mut buf).unwrap();
        assert_eq!(read_matrix_csv(buf.as_slice()).unwrap(), m);
    }
}

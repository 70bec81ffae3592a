//! Per-round auxiliary problem: minimize the summed cost lower confidence bound
//! subject to the summed latency lower confidence bound staying within `L`,
//! over a per-domain search grid.
//!
//! All sums are accumulated left to right over domains. Feasibility is the
//! predicate `sum <= L` on that exact floating-point sum, so a decomposition
//! reported feasible can be re-checked bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surrogate::ObservationHistory;

/// Candidate latency targets for every domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchGrid {
    points: Vec<Vec<f64>>,
}

impl SearchGrid {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("search grid has no domains".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.is_empty() {
                return Err(Error::InvalidInput(format!("grid for domain {} is empty", i + 1)));
            }
            if p.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "grid for domain {} has a non-positive or non-finite value",
                    i + 1
                )));
            }
            if p.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidInput(format!(
                    "grid for domain {} is not strictly increasing",
                    i + 1
                )));
            }
        }
        Ok(SearchGrid { points })
    }

    /// `points` evenly spaced values over `[lo, hi]` for each domain.
    pub fn uniform(bounds: &[(f64, f64, usize)]) -> Result<Self> {
        let points = bounds
            .iter()
            .map(|&(lo, hi, n)| match n {
                0 => Vec::new(),
                1 => vec![lo],
                _ => (0..n)
                    .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                    .collect(),
            })
            .collect();
        Self::new(points)
    }

    pub fn num_domains(&self) -> usize {
        self.points.len()
    }

    pub fn domain(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn resolution(&self, i: usize) -> usize {
        self.points[i].len()
    }

    /// Number of grid combinations, `None` on overflow.
    pub fn combinations(&self) -> Option<u128> {
        self.points
            .iter()
            .try_fold(1u128, |acc, p| acc.checked_mul(p.len() as u128))
    }

    pub fn decomposition(&self, indices: &[usize]) -> Result<Decomposition> {
        if indices.len() != self.num_domains() {
            return Err(Error::InvalidInput(format!(
                "decomposition has {} entries for {} domains",
                indices.len(),
                self.num_domains()
            )));
        }
        let targets = indices
            .iter()
            .zip(&self.points)
            .map(|(&j, p)| {
                p.get(j).copied().ok_or_else(|| {
                    Error::InvalidInput(format!("grid index {j} out of range ({})", p.len()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Decomposition {
            indices: indices.to_vec(),
            targets,
        })
    }
}

/// Per-domain latency targets, each taken from its domain's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    indices: Vec<usize>,
    targets: Vec<f64>,
}

impl Decomposition {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

/// Left-to-right sum, the canonical accumulation order for per-domain terms.
pub fn ordered_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut it = values.into_iter();
    match it.next() {
        Some(first) => it.fold(first, |acc, v| acc + v),
        None => 0.0,
    }
}

/// `mu(x) - beta * sigma(x)`.
pub fn lcb(history: &ObservationHistory, beta: f64, x: &[f64]) -> Result<f64> {
    let (mean, var) = history.posterior(x)?;
    Ok(mean - beta * var.sqrt())
}

/// Lower-confidence-bound values of one domain over its grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTable {
    pub latency: Vec<f64>,
    pub cost: Vec<f64>,
}

impl DomainTable {
    pub fn new(latency: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        if latency.len() != cost.len() || latency.is_empty() {
            return Err(Error::InvalidInput(format!(
                "table needs equal nonempty columns, got {} and {}",
                latency.len(),
                cost.len()
            )));
        }
        if latency.iter().chain(&cost).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite confidence bound".into()));
        }
        Ok(DomainTable { latency, cost })
    }

    pub fn len(&self) -> usize {
        self.latency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latency.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Full Cartesian enumeration.
    Enumerate,
    /// Exact Pareto-frontier dynamic program over the separable constraint.
    Frontier,
    /// Enumeration for small grids, frontier otherwise.
    #[default]
    Auto,
}

const AUTO_ENUMERATION_LIMIT: u128 = 10_000;

/// Outcome of one auxiliary solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub indices: Vec<usize>,
    /// Whether some grid point satisfied the optimistic latency constraint.
    pub feasible: bool,
    pub latency_sum: f64,
    pub cost_sum: f64,
}

/// Picks the grid point of least summed cost bound among those whose summed
/// latency bound is at most `sla`. If none qualifies, returns the point of
/// least summed latency bound with `feasible = false`. Ties go to the
/// lexicographically smallest index tuple.
pub fn select(tables: &[DomainTable], sla: f64, solver: SolverKind) -> Result<Selection> {
    if tables.is_empty() || tables.iter().any(DomainTable::is_empty) {
        return Err(Error::InvalidInput("empty search grid".into()));
    }
    if !(sla.is_finite() && sla > 0.0) {
        return Err(Error::InvalidInput(format!("SLA target must be positive, got {sla}")));
    }
    let combos = tables
        .iter()
        .try_fold(1u128, |acc, t| acc.checked_mul(t.len() as u128));
    let solver = match solver {
        SolverKind::Auto => match combos {
            Some(c) if c <= AUTO_ENUMERATION_LIMIT => SolverKind::Enumerate,
            _ => SolverKind::Frontier,
        },
        s => s,
    };
    match solver {
        SolverKind::Enumerate => Ok(enumerate(tables, sla)),
        _ => frontier(tables, sla),
    }
}

/// [`select`] over surrogate histories, one per domain and function.
pub fn select_decomposition(
    f_surrogates: &[ObservationHistory],
    g_surrogates: &[ObservationHistory],
    f_betas: &[f64],
    g_betas: &[f64],
    sla: f64,
    grid: &SearchGrid,
) -> Result<(Decomposition, bool)> {
    let d = grid.num_domains();
    if [f_surrogates.len(), g_surrogates.len(), f_betas.len(), g_betas.len()]
        .iter()
        .any(|&n| n != d)
    {
        return Err(Error::InvalidInput(format!(
            "expected {d} surrogates and widths per function"
        )));
    }
    let tables = (0..d)
        .map(|i| {
            let mut lat = Vec::with_capacity(grid.resolution(i));
            let mut cost = Vec::with_capacity(grid.resolution(i));
            for &x in grid.domain(i) {
                lat.push(lcb(&f_surrogates[i], f_betas[i], &[x])?);
                cost.push(lcb(&g_surrogates[i], g_betas[i], &[x])?);
            }
            DomainTable::new(lat, cost)
        })
        .collect::<Result<Vec<_>>>()?;
    let sel = select(&tables, sla, SolverKind::Auto)?;
    Ok((grid.decomposition(&sel.indices)?, sel.feasible))
}

/// Single-table variant for a joint (non-separable) surrogate whose candidates
/// are already listed in lexicographic order.
pub fn select_joint(latency: &[f64], cost: &[f64], sla: f64) -> Result<(usize, bool)> {
    if latency.is_empty() || latency.len() != cost.len() {
        return Err(Error::InvalidInput("empty or mismatched candidate table".into()));
    }
    let mut best: Option<usize> = None;
    let mut fallback = 0;
    for j in 0..latency.len() {
        if latency[j] <= sla && best.is_none_or(|b| cost[j] < cost[b]) {
            best = Some(j);
        }
        if latency[j] < latency[fallback] {
            fallback = j;
        }
    }
    Ok(match best {
        Some(j) => (j, true),
        None => (fallback, false),
    })
}

fn enumerate(tables: &[DomainTable], sla: f64) -> Selection {
    let d = tables.len();
    let last = &tables[d - 1];
    let mut idx = vec![0usize; d];
    let mut best: Option<(Vec<usize>, f64, f64)> = None;
    let mut fallback: (Vec<usize>, f64, f64) = (Vec::new(), f64::INFINITY, f64::INFINITY);
    'outer: loop {
        // Prefix sums over all but the last domain.
        let (mut lat, mut cost) = (tables[0].latency[idx[0]], tables[0].cost[idx[0]]);
        if d == 1 {
            lat = 0.0;
            cost = 0.0;
        }
        for k in 1..d - 1 {
            lat += tables[k].latency[idx[k]];
            cost += tables[k].cost[idx[k]];
        }
        for j in 0..last.len() {
            let (l, c) = if d == 1 {
                (last.latency[j], last.cost[j])
            } else {
                (lat + last.latency[j], cost + last.cost[j])
            };
            if l <= sla && best.as_ref().is_none_or(|b| c < b.2) {
                idx[d - 1] = j;
                best = Some((idx.clone(), l, c));
            }
            if l < fallback.1 {
                idx[d - 1] = j;
                fallback = (idx.clone(), l, c);
            }
        }
        // Odometer over the leading domains, last leading index fastest.
        let mut k = d - 1;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            idx[k] += 1;
            if idx[k] < tables[k].len() {
                break;
            }
            idx[k] = 0;
        }
    }
    match best {
        Some((indices, latency_sum, cost_sum)) => Selection {
            indices,
            feasible: true,
            latency_sum,
            cost_sum,
        },
        None => Selection {
            indices: fallback.0,
            feasible: false,
            latency_sum: fallback.1,
            cost_sum: fallback.2,
        },
    }
}

#[derive(Debug, Clone, Copy)]
struct Partial {
    latency: f64,
    cost: f64,
    // Mixed-radix code of the index prefix; numeric order is lexicographic order.
    code: u128,
}

fn decode(mut code: u128, tables: &[DomainTable]) -> Vec<usize> {
    let mut out = vec![0; tables.len()];
    for k in (0..tables.len()).rev() {
        let g = tables[k].len() as u128;
        out[k] = (code % g) as usize;
        code /= g;
    }
    out
}

/// Drops every partial decomposition that another one beats on latency while
/// being cheaper, or equally cheap with a smaller index prefix. Whatever
/// completes a dropped prefix is matched or beaten by the same completion of
/// the prefix that dominates it.
fn prune(mut states: Vec<Partial>) -> Vec<Partial> {
    states.sort_by(|a, b| {
        a.latency
            .total_cmp(&b.latency)
            .then(a.cost.total_cmp(&b.cost))
            .then(a.code.cmp(&b.code))
    });
    let mut kept: Vec<Partial> = Vec::new();
    let mut best: Option<(f64, u128)> = None;
    for s in states {
        let dominated = best.is_some_and(|(c, code)| c < s.cost || (c == s.cost && code < s.code));
        if !dominated {
            best = Some((s.cost, s.code));
            kept.push(s);
        }
    }
    kept
}

fn frontier(tables: &[DomainTable], sla: f64) -> Result<Selection> {
    if tables
        .iter()
        .try_fold(1u128, |acc, t| acc.checked_mul(t.len() as u128))
        .is_none()
    {
        return Err(Error::InvalidInput("grid too large to index".into()));
    }
    let d = tables.len();

    // Fallback: least summed latency bound, separable per domain.
    let fb_idx: Vec<usize> = tables
        .iter()
        .map(|t| {
            let mut b = 0;
            for j in 1..t.len() {
                if t.latency[j] < t.latency[b] {
                    b = j;
                }
            }
            b
        })
        .collect();

    let mut states: Vec<Partial> = vec![Partial {
        latency: 0.0,
        cost: 0.0,
        code: 0,
    }];
    for (k, table) in tables.iter().enumerate().take(d - 1) {
        let g = table.len() as u128;
        let mut next = Vec::with_capacity(states.len() * table.len());
        for s in &states {
            for j in 0..table.len() {
                let (latency, cost) = if k == 0 {
                    (table.latency[j], table.cost[j])
                } else {
                    (s.latency + table.latency[j], s.cost + table.cost[j])
                };
                next.push(Partial {
                    latency,
                    cost,
                    code: s.code * g + j as u128,
                });
            }
        }
        states = prune(next);
    }

    // Last domain: sort by latency bound, prefix minima of (cost, index).
    let last = &tables[d - 1];
    let g_last = last.len() as u128;
    let mut order: Vec<usize> = (0..last.len()).collect();
    order.sort_by(|&a, &b| last.latency[a].total_cmp(&last.latency[b]).then(a.cmp(&b)));
    let mut prefix_best: Vec<usize> = Vec::with_capacity(order.len());
    for &j in &order {
        let pick = match prefix_best.last() {
            Some(&p) if (last.cost[p], p) <= (last.cost[j], j) => p,
            _ => j,
        };
        prefix_best.push(pick);
    }

    let mut best: Option<(u128, f64, f64)> = None;
    for s in &states {
        let sum_lat = |j: usize| {
            if d == 1 {
                last.latency[j]
            } else {
                s.latency + last.latency[j]
            }
        };
        // Number of sorted entries passing the (monotone) feasibility predicate.
        let n_ok = order.partition_point(|&j| sum_lat(j) <= sla);
        if n_ok == 0 {
            continue;
        }
        let j = prefix_best[n_ok - 1];
        let lat = sum_lat(j);
        let cost = if d == 1 { last.cost[j] } else { s.cost + last.cost[j] };
        let code = s.code * g_last + j as u128;
        let better = match best {
            None => true,
            Some((bc, _, bcost)) => cost < bcost || (cost == bcost && code < bc),
        };
        if better {
            best = Some((code, lat, cost));
        }
    }

    Ok(match best {
        Some((code, latency_sum, cost_sum)) => Selection {
            indices: decode(code, tables),
            feasible: true,
            latency_sum,
            cost_sum,
        },
        None => Selection {
            latency_sum: ordered_sum(fb_idx.iter().zip(tables).map(|(&j, t)| t.latency[j])),
            cost_sum: ordered_sum(fb_idx.iter().zip(tables).map(|(&j, t)| t.cost[j])),
            indices: fb_idx,
            feasible: false,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelSpec;
    use proptest::prelude::*;

    fn toy_tables() -> Vec<DomainTable> {
        // grids {1, 2}; f = x in both; g1 = 1/x, g2 = 2/x
        vec![
            DomainTable::new(vec![1.0, 2.0], vec![1.0, 0.5]).unwrap(),
            DomainTable::new(vec![1.0, 2.0], vec![2.0, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn toy_problem_both_solvers() {
        for solver in [SolverKind::Enumerate, SolverKind::Frontier] {
            let sel = select(&toy_tables(), 3.0, solver).unwrap();
            assert_eq!(sel.indices, vec![0, 1]);
            assert!(sel.feasible);
            assert_eq!(sel.cost_sum, 2.0);
            assert_eq!(sel.latency_sum, 3.0);
        }
    }

    #[test]
    fn vacuous_constraint_is_unconstrained_argmin() {
        for solver in [SolverKind::Enumerate, SolverKind::Frontier] {
            let sel = select(&toy_tables(), 100.0, solver).unwrap();
            assert_eq!(sel.indices, vec![1, 1]);
            assert_eq!(sel.cost_sum, 1.5);
        }
    }

    #[test]
    fn infeasible_falls_back_to_least_latency() {
        let tables = vec![
            DomainTable::new(vec![3.0, 2.0, 2.0], vec![0.0, 1.0, 0.0]).unwrap(),
            DomainTable::new(vec![5.0, 4.0], vec![0.0, 0.0]).unwrap(),
        ];
        for solver in [SolverKind::Enumerate, SolverKind::Frontier] {
            let sel = select(&tables, 1.0, solver).unwrap();
            assert!(!sel.feasible);
            assert_eq!(sel.indices, vec![1, 1]);
            assert_eq!(sel.latency_sum, 6.0);
        }
    }

    #[test]
    fn constant_prior_picks_first_point() {
        let se = KernelSpec::squared_exponential(1.0, 1).unwrap();
        let h = ObservationHistory::new(se, 1.0).unwrap();
        let grid = SearchGrid::uniform(&[(0.1, 10.0, 5), (0.1, 10.0, 4), (1.0, 2.0, 3)]).unwrap();
        let hs = vec![h.clone(), h.clone(), h];
        let (dec, feasible) =
            select_decomposition(&hs, &hs, &[2.0; 3], &[2.0; 3], 7.5, &grid).unwrap();
        assert!(feasible);
        assert_eq!(dec.indices(), &[0, 0, 0]);
        assert_eq!(dec.targets(), &[0.1, 0.1, 1.0]);
        for solver in [SolverKind::Enumerate, SolverKind::Frontier] {
            let t = DomainTable::new(vec![-2.0; 6], vec![-2.0; 6]).unwrap();
            let sel = select(&[t.clone(), t.clone(), t], 7.5, solver).unwrap();
            assert_eq!(sel.indices, vec![0, 0, 0]);
        }
    }

    #[test]
    fn lcb_examples() {
        let se = KernelSpec::squared_exponential(1.0, 1).unwrap();
        let empty = ObservationHistory::new(se, 1.0).unwrap();
        assert_eq!(lcb(&empty, 2.0, &[4.0]).unwrap(), -2.0);
        let mut h = ObservationHistory::new(KernelSpec::linear(1).unwrap(), 1.0).unwrap();
        h.update(&[1.0], 2.0).unwrap();
        assert_eq!(lcb(&h, 0.0, &[1.0]).unwrap(), h.posterior_mean(&[1.0]).unwrap());
        assert!((lcb(&h, 1.0, &[1.0]).unwrap() - (1.0 - 0.5f64.sqrt())).abs() < 1e-12);
        assert!((lcb(&h, 1.0, &[1.0]).unwrap() - 0.29289).abs() < 1e-5);
    }

    #[test]
    fn rejects_empty_grid() {
        assert!(select(&[], 1.0, SolverKind::Auto).is_err());
        assert!(DomainTable::new(vec![], vec![]).is_err());
        assert!(SearchGrid::new(vec![vec![]]).is_err());
        assert!(SearchGrid::new(vec![vec![1.0, 1.0]]).is_err());
        assert!(SearchGrid::new(vec![vec![0.0, 1.0]]).is_err());
        assert!(select_joint(&[], &[], 1.0).is_err());
    }

    #[test]
    fn joint_selection() {
        let (j, ok) = select_joint(&[3.0, 1.0, 2.0, 1.0], &[0.0, 5.0, 4.0, 4.0], 2.0).unwrap();
        assert_eq!((j, ok), (2, true));
        let (j, ok) = select_joint(&[3.0, 1.5, 2.0, 1.5], &[0.0; 4], 1.0).unwrap();
        assert_eq!((j, ok), (1, false));
    }

    #[test]
    fn uniform_grid() {
        let g = SearchGrid::uniform(&[(0.1, 10.0, 100), (2.0, 2.0, 1)]).unwrap();
        assert_eq!(g.resolution(0), 100);
        assert_eq!(g.domain(0)[0], 0.1);
        assert_eq!(g.domain(0)[99], 10.0);
        assert_eq!(g.combinations(), Some(100));
        assert!(g.decomposition(&[100, 0]).is_err());
    }

    fn tables_strategy() -> impl Strategy<Value = Vec<DomainTable>> {
        (1usize..=3, 1usize..=20).prop_flat_map(|(d, g)| {
            prop::collection::vec(
                (
                    prop::collection::vec(-3.0f64..6.0, g),
                    prop::collection::vec(-3.0f64..6.0, g),
                ),
                d,
            )
            .prop_map(|cols| {
                cols.into_iter()
                    .map(|(l, c)| DomainTable::new(l, c).unwrap())
                    .collect()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn frontier_matches_enumeration(tables in tables_strategy(), sla in 0.5f64..12.0) {
            let a = select(&tables, sla, SolverKind::Enumerate).unwrap();
            let b = select(&tables, sla, SolverKind::Frontier).unwrap();
            prop_assert_eq!(&a, &b);
            if a.feasible {
                let recomputed = ordered_sum(a.indices.iter().zip(&tables).map(|(&j, t)| t.latency[j]));
                prop_assert!(recomputed <= sla);
                prop_assert_eq!(recomputed, a.latency_sum);
            }
        }

        #[test]
        fn frontier_matches_enumeration_with_ties(d in 1usize..=3, g in 1usize..=8,
                                                  seed in prop::collection::vec(0u8..3, 48), sla in 1.0f64..6.0) {
            // Coarse integer values force many exact ties.
            let mut it = seed.into_iter().cycle();
            let tables: Vec<DomainTable> = (0..d).map(|_| {
                let l = (0..g).map(|_| it.next().unwrap() as f64).collect();
                let c = (0..g).map(|_| it.next().unwrap() as f64).collect();
                DomainTable::new(l, c).unwrap()
            }).collect();
            let a = select(&tables, sla, SolverKind::Enumerate).unwrap();
            let b = select(&tables, sla, SolverKind::Frontier).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

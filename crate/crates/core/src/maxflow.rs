//! Exact global minimization of the binary grid CRF energy via s-t min-cut.
//!
//! Capacities are quantized to fixed point so augmenting-path search
//! terminates and the cut value is exactly integral; the de-quantized cut
//! value matches the real energy within `(nodes + edges) * 0.5 / scale`.

use crate::energy::{evaluate_energy, CrfInstance, EnergyBreakdown, Labeling};
use thiserror::Error;

/// Default fixed-point quantization factor.
pub const DEFAULT_SCALE: i64 = 1_000_000;

/// Largest per-capacity value accepted before reporting overflow; keeps the
/// total flow comfortably inside i64 for any grid this crate handles.
const CAP_LIMIT: f64 = (1u64 << 40) as f64;

/// Brute force is exponential; refuse anything past this many pixels.
const BRUTE_FORCE_MAX_PIXELS: usize = 20;

#[derive(Debug, Error)]
pub enum MaxflowError {
    #[error("capacity overflow at pixel ({row}, {col}): scaled cost {value} exceeds limit")]
    CapacityOverflow { row: usize, col: usize, value: f64 },
    #[error("grid too large for brute force: {pixels} pixels (max {max})")]
    GridTooLarge { pixels: usize, max: usize },
    #[error(transparent)]
    Energy(#[from] crate::energy::EnergyError),
}

#[derive(Debug, Clone, Copy)]
struct Arc {
    to: u32,
    cap: i64,
}

/// s-t flow network for one CRF instance. Node `i` is pixel `i` in row-major
/// order; the two extra nodes are the source and sink. Arcs are stored in
/// xor-paired slots so `arcs[e ^ 1]` is the residual partner of `arcs[e]`.
#[derive(Debug, Clone)]
pub struct FlowGraph {
    height: usize,
    width: usize,
    scale: i64,
    arcs: Vec<Arc>,
    /// Head of each node's arc list into `next`.
    head: Vec<u32>,
    next: Vec<u32>,
}

const NONE: u32 = u32::MAX;

impl FlowGraph {
    pub fn node_count(&self) -> usize {
        self.height * self.width
    }

    pub fn scale(&self) -> i64 {
        self.scale
    }

    fn source(&self) -> u32 {
        (self.height * self.width) as u32
    }

    fn sink(&self) -> u32 {
        (self.height * self.width) as u32 + 1
    }

    fn add_arc_pair(&mut self, from: u32, to: u32, cap_fwd: i64, cap_rev: i64) {
        debug_assert!(cap_fwd >= 0 && cap_rev >= 0);
        let e = self.arcs.len() as u32;
        self.arcs.push(Arc { to, cap: cap_fwd });
        self.next.push(self.head[from as usize]);
        self.head[from as usize] = e;
        self.arcs.push(Arc { to: from, cap: cap_rev });
        self.next.push(self.head[to as usize]);
        self.head[to as usize] = e + 1;
    }
}

/// Cut of one solved instance: the optimal labeling, the de-quantized cut
/// value, and the number of augmenting pushes spent finding it.
#[derive(Debug, Clone)]
pub struct CutResult {
    pub labeling: Labeling,
    pub flow_value: f64,
    pub augmentations: u64,
}

/// Quantization slack for energy comparisons on this instance: each rounded
/// capacity is off by at most 0.5, so the de-quantized optimum can differ
/// from the real one by at most this much.
pub fn quantization_bound(instance: &CrfInstance, scale: i64) -> f64 {
    (instance.node_count() + instance.edge_count()) as f64 * 0.5 / scale as f64
}

/// Build the s-t network for `instance`. Source side of the cut gets label 1:
/// `cap(source -> p) = round(scale * f_p(0))` and
/// `cap(p -> sink) = round(scale * f_p(1))`, so a pixel pays the cost of the
/// label it takes; neighbor pairs get symmetric n-links `round(scale * w_pq)`.
pub fn build_graph(instance: &CrfInstance, scale: i64) -> Result<FlowGraph, MaxflowError> {
    let (h, w) = (instance.height(), instance.width());
    let n = h * w;
    let t_arcs = 2 * n;
    let n_arcs = instance.edge_count();
    let mut graph = FlowGraph {
        height: h,
        width: w,
        scale,
        arcs: Vec::with_capacity(2 * (t_arcs + n_arcs)),
        head: vec![NONE; n + 2],
        next: Vec::with_capacity(2 * (t_arcs + n_arcs)),
    };

    let quantize = |value: f64, row: usize, col: usize| -> Result<i64, MaxflowError> {
        let scaled = value * scale as f64;
        if !scaled.is_finite() || scaled > CAP_LIMIT {
            return Err(MaxflowError::CapacityOverflow {
                row,
                col,
                value: scaled,
            });
        }
        Ok(scaled.round() as i64)
    };

    let source = graph.source();
    let sink = graph.sink();
    for r in 0..h {
        for c in 0..w {
            let p = (r * w + c) as u32;
            let cap_src = quantize(instance.unary.cost0[r * w + c], r, c)?;
            let cap_snk = quantize(instance.unary.cost1[r * w + c], r, c)?;
            graph.add_arc_pair(source, p, cap_src, 0);
            graph.add_arc_pair(p, sink, cap_snk, 0);
        }
    }
    for r in 0..h {
        for c in 0..w - 1 {
            let cap = quantize(instance.pairwise.horizontal(r, c), r, c)?;
            let p = (r * w + c) as u32;
            graph.add_arc_pair(p, p + 1, cap, cap);
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            let cap = quantize(instance.pairwise.vertical(r, c), r, c)?;
            let p = (r * w + c) as u32;
            graph.add_arc_pair(p, p + w as u32, cap, cap);
        }
    }
    Ok(graph)
}

/// Dinic-style blocking-flow solver: BFS level graph, then DFS augmentation
/// with the current-arc optimization, repeated until the sink is unreachable.
pub fn min_cut(graph: &mut FlowGraph) -> CutResult {
    let node_total = graph.node_count() + 2;
    let source = graph.source();
    let sink = graph.sink();
    let mut level = vec![0u32; node_total];
    let mut iter = vec![NONE; node_total];
    let mut queue = Vec::with_capacity(node_total);
    let mut total_flow: i64 = 0;
    let mut augmentations: u64 = 0;

    loop {
        // BFS over residual arcs to assign levels.
        level.fill(NONE);
        level[source as usize] = 0;
        queue.clear();
        queue.push(source);
        let mut qi = 0;
        while qi < queue.len() {
            let u = queue[qi];
            qi += 1;
            let mut e = graph.head[u as usize];
            while e != NONE {
                let arc = graph.arcs[e as usize];
                if arc.cap > 0 && level[arc.to as usize] == NONE {
                    level[arc.to as usize] = level[u as usize] + 1;
                    queue.push(arc.to);
                }
                e = graph.next[e as usize];
            }
        }
        if level[sink as usize] == NONE {
            break;
        }

        iter.copy_from_slice(&graph.head);
        loop {
            let pushed = dfs_augment(graph, &level, &mut iter, source, sink, i64::MAX);
            if pushed == 0 {
                break;
            }
            total_flow += pushed;
            augmentations += 1;
        }
    }

    // Pixels still reachable from the source take label 1; everything with
    // zero residual connectivity (ties included) stays background.
    let mut reachable = vec![false; node_total];
    reachable[source as usize] = true;
    queue.clear();
    queue.push(source);
    let mut qi = 0;
    while qi < queue.len() {
        let u = queue[qi];
        qi += 1;
        let mut e = graph.head[u as usize];
        while e != NONE {
            let arc = graph.arcs[e as usize];
            if arc.cap > 0 && !reachable[arc.to as usize] {
                reachable[arc.to as usize] = true;
                queue.push(arc.to);
            }
            e = graph.next[e as usize];
        }
    }

    let mut labeling = Labeling::new(graph.height, graph.width);
    for r in 0..graph.height {
        for c in 0..graph.width {
            if reachable[r * graph.width + c] {
                labeling.set(r, c, 1);
            }
        }
    }

    CutResult {
        labeling,
        flow_value: total_flow as f64 / graph.scale as f64,
        augmentations,
    }
}

fn dfs_augment(
    graph: &mut FlowGraph,
    level: &[u32],
    iter: &mut [u32],
    u: u32,
    sink: u32,
    limit: i64,
) -> i64 {
    if u == sink {
        return limit;
    }
    while iter[u as usize] != NONE {
        let e = iter[u as usize];
        let Arc { to, cap } = graph.arcs[e as usize];
        if cap > 0 && level[to as usize] == level[u as usize] + 1 {
            let pushed = dfs_augment(graph, level, iter, to, sink, limit.min(cap));
            if pushed > 0 {
                graph.arcs[e as usize].cap -= pushed;
                graph.arcs[(e ^ 1) as usize].cap += pushed;
                return pushed;
            }
        }
        iter[u as usize] = graph.next[e as usize];
    }
    0
}

/// Convenience entry point: build the quantized graph at the default scale
/// and solve it.
pub fn optimize(instance: &CrfInstance) -> Result<CutResult, MaxflowError> {
    optimize_scaled(instance, DEFAULT_SCALE)
}

pub fn optimize_scaled(instance: &CrfInstance, scale: i64) -> Result<CutResult, MaxflowError> {
    let mut graph = build_graph(instance, scale)?;
    Ok(min_cut(&mut graph))
}

/// Exhaustive minimum over all `2^(H*W)` labelings; ties broken by
/// lexicographic order of the flattened labeling. Test oracle only.
pub fn brute_force_optimize(instance: &CrfInstance) -> Result<CutResult, MaxflowError> {
    let n = instance.node_count();
    if n > BRUTE_FORCE_MAX_PIXELS {
        return Err(MaxflowError::GridTooLarge {
            pixels: n,
            max: BRUTE_FORCE_MAX_PIXELS,
        });
    }
    let (h, w) = (instance.height(), instance.width());
    let mut best_energy = f64::INFINITY;
    let mut best_mask: u64 = 0;
    let mut labels = vec![0u8; n];
    for mask in 0u64..(1u64 << n) {
        // labels[0] is the most significant bit so that ascending mask order
        // is lexicographic order of the flattened labeling.
        for (i, l) in labels.iter_mut().enumerate() {
            *l = ((mask >> (n - 1 - i)) & 1) as u8;
        }
        let energy = energy_of(instance, &labels, h, w);
        if energy < best_energy {
            best_energy = energy;
            best_mask = mask;
        }
    }
    let mut labeling = Labeling::new(h, w);
    for r in 0..h {
        for c in 0..w {
            labeling.set(r, c, ((best_mask >> (n - 1 - (r * w + c))) & 1) as u8);
        }
    }
    Ok(CutResult {
        labeling,
        flow_value: best_energy,
        augmentations: 0,
    })
}

fn energy_of(instance: &CrfInstance, labels: &[u8], h: usize, w: usize) -> f64 {
    let mut total = 0.0;
    for (i, &x) in labels.iter().enumerate() {
        total += instance.unary.cost(i, x);
    }
    let pw = &instance.pairwise;
    for r in 0..h {
        for c in 0..w - 1 {
            if labels[r * w + c] != labels[r * w + c + 1] {
                total += pw.horizontal(r, c);
            }
        }
    }
    for r in 0..h - 1 {
        for c in 0..w {
            if labels[r * w + c] != labels[(r + 1) * w + c] {
                total += pw.vertical(r, c);
            }
        }
    }
    total
}

/// Energy of the solved labeling under the instance it came from.
pub fn cut_energy(instance: &CrfInstance, cut: &CutResult) -> EnergyBreakdown {
    evaluate_energy(instance, &cut.labeling).expect("cut labeling matches its instance")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{
        compute_pairwise_weights, per_pixel_argmin, unary_from_prob, ColorImage, PairwiseField,
        ScalarField, SigmaParam, UnaryField,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_1x2() -> CrfInstance {
        let unary = UnaryField::from_costs(1, 2, vec![1.0, 1.0], vec![2.0, 3.0]);
        let pairwise = PairwiseField::from_weights(1, 2, vec![4.0], vec![], 4.0);
        CrfInstance::new(unary, pairwise).unwrap()
    }

    fn random_instance(rng: &mut ChaCha8Rng, h: usize, w: usize, max_lambda: f64) -> CrfInstance {
        let n = h * w;
        let cost0 = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let cost1 = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let unary = UnaryField::from_costs(h, w, cost0, cost1);
        let lambda = rng.gen_range(0.0..max_lambda);
        let pairwise = if h >= 2 && w >= 2 {
            let mut img = ColorImage::new(h, w);
            for p in img.pixels.iter_mut() {
                *p = [rng.gen(), rng.gen(), rng.gen()];
            }
            compute_pairwise_weights(&img, lambda, SigmaParam::Auto).unwrap()
        } else {
            let wh = (0..h * (w - 1)).map(|_| rng.gen_range(0.0..1.0) * lambda).collect();
            let wv = (0..(h - 1) * w).map(|_| rng.gen_range(0.0..1.0) * lambda).collect();
            PairwiseField::from_weights(h, w, wh, wv, lambda)
        };
        CrfInstance::new(unary, pairwise).unwrap()
    }

    #[test]
    fn build_graph_quantizes_t_links() {
        let unary = UnaryField::from_costs(1, 1, vec![2.0], vec![3.0]);
        let pairwise = PairwiseField::zeros(1, 1);
        let inst = CrfInstance::new(unary, pairwise).unwrap();
        let g = build_graph(&inst, DEFAULT_SCALE).unwrap();
        // Arc slots 0/2 are source->p and p->sink for the single pixel.
        assert_eq!(g.arcs[0].cap, 2_000_000);
        assert_eq!(g.arcs[2].cap, 3_000_000);
    }

    #[test]
    fn build_graph_tiny_1x2_n_link() {
        let g = build_graph(&tiny_1x2(), DEFAULT_SCALE).unwrap();
        assert_eq!(g.node_count(), 2);
        // After 4 t-link pairs the n-link pair holds the symmetric weight.
        assert_eq!(g.arcs[8].cap, 4_000_000);
        assert_eq!(g.arcs[9].cap, 4_000_000);
    }

    #[test]
    fn zero_lambda_gives_zero_n_links() {
        let unary = UnaryField::from_costs(2, 2, vec![1.0; 4], vec![2.0; 4]);
        let inst = CrfInstance::new(unary, PairwiseField::zeros(2, 2)).unwrap();
        let g = build_graph(&inst, DEFAULT_SCALE).unwrap();
        for e in 16..g.arcs.len() {
            assert_eq!(g.arcs[e].cap, 0);
        }
    }

    #[test]
    fn overflow_reports_offending_pixel() {
        let unary = UnaryField::from_costs(1, 2, vec![1.0, 1e40], vec![1.0, 1.0]);
        let inst = CrfInstance::new(unary, PairwiseField::zeros(1, 2)).unwrap();
        match build_graph(&inst, DEFAULT_SCALE) {
            Err(MaxflowError::CapacityOverflow { row, col, .. }) => {
                assert_eq!((row, col), (0, 1));
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn tiny_1x2_optimum_matches_brute_force() {
        let inst = tiny_1x2();
        let cut = optimize(&inst).unwrap();
        assert_eq!(cut.labeling.as_slice(), &[0, 0]);
        let e = cut_energy(&inst, &cut);
        assert_eq!(e.total, 2.0);
        let brute = brute_force_optimize(&inst).unwrap();
        assert_eq!(brute.labeling.as_slice(), &[0, 0]);
        assert_eq!(brute.flow_value, 2.0);
    }

    #[test]
    fn lambda_zero_recovers_per_pixel_argmin() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = 4 * 4;
            let cost0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let cost1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let unary = UnaryField::from_costs(4, 4, cost0, cost1);
            let expected = per_pixel_argmin(&unary);
            let inst = CrfInstance::new(unary, PairwiseField::zeros(4, 4)).unwrap();
            let cut = optimize(&inst).unwrap();
            assert_eq!(cut.labeling, expected);
        }
    }

    #[test]
    fn huge_lambda_forces_constant_labeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 3 * 4;
        let cost0: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let cost1: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let gap: f64 = cost0
            .iter()
            .zip(&cost1)
            .map(|(a, b)| (a - b).abs())
            .sum();
        let lambda = gap + 1.0;
        let wh = vec![lambda; 3 * 3];
        let wv = vec![lambda; 2 * 4];
        let sum0: f64 = cost0.iter().sum();
        let sum1: f64 = cost1.iter().sum();
        let unary = UnaryField::from_costs(3, 4, cost0, cost1);
        let pairwise = PairwiseField::from_weights(3, 4, wh, wv, lambda);
        let inst = CrfInstance::new(unary, pairwise).unwrap();
        let cut = optimize(&inst).unwrap();
        assert!(cut.labeling.is_constant());
        let expected = if sum1 < sum0 { 1 } else { 0 };
        assert_eq!(cut.labeling.get(0, 0), expected);
    }

    #[test]
    fn random_3x3_instances_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..60 {
            let inst = random_instance(&mut rng, 3, 3, 10.0);
            let cut = optimize(&inst).unwrap();
            let brute = brute_force_optimize(&inst).unwrap();
            let bound = quantization_bound(&inst, DEFAULT_SCALE);
            let cut_total = cut_energy(&inst, &cut).total;
            assert!(
                (cut_total - brute.flow_value).abs() <= bound,
                "cut {} vs brute {} (bound {})",
                cut_total,
                brute.flow_value,
                bound
            );
        }
    }

    #[test]
    fn flow_value_matches_labeling_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let inst = random_instance(&mut rng, 4, 4, 8.0);
            let cut = optimize(&inst).unwrap();
            let bound = quantization_bound(&inst, DEFAULT_SCALE);
            let e = cut_energy(&inst, &cut);
            assert!(
                (cut.flow_value - e.total).abs() <= bound,
                "flow {} vs energy {}",
                cut.flow_value,
                e.total
            );
        }
    }

    #[test]
    fn optimum_lower_bounds_random_labelings() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..30 {
            let inst = random_instance(&mut rng, 4, 5, 6.0);
            let cut = optimize(&inst).unwrap();
            let bound = quantization_bound(&inst, DEFAULT_SCALE);
            let opt = cut_energy(&inst, &cut).total;
            for _ in 0..20 {
                let labels: Vec<u8> = (0..20).map(|_| rng.gen_range(0u8..2)).collect();
                let y = Labeling::from_labels(4, 5, labels);
                let e = evaluate_energy(&inst, &y).unwrap();
                assert!(opt <= e.total + bound);
            }
        }
    }

    #[test]
    fn brute_force_ties_break_lexicographically() {
        // Two pixels, all-equal costs, no coupling: every labeling ties at 2,
        // so the all-zero labeling must win.
        let unary = UnaryField::from_costs(1, 2, vec![1.0, 1.0], vec![1.0, 1.0]);
        let inst = CrfInstance::new(unary, PairwiseField::zeros(1, 2)).unwrap();
        let brute = brute_force_optimize(&inst).unwrap();
        assert_eq!(brute.labeling.as_slice(), &[0, 0]);
    }

    #[test]
    fn brute_force_2x2_equal_unaries_prefers_constant() {
        let unary = UnaryField::from_costs(2, 2, vec![1.0; 4], vec![1.0; 4]);
        let pairwise = PairwiseField::from_weights(2, 2, vec![0.5, 0.5], vec![0.5, 0.5], 0.5);
        let inst = CrfInstance::new(unary, pairwise).unwrap();
        let brute = brute_force_optimize(&inst).unwrap();
        assert!(brute.labeling.is_constant());
        assert_eq!(brute.flow_value, 4.0);
    }

    #[test]
    fn brute_force_rejects_large_grids() {
        let unary = UnaryField::from_costs(5, 5, vec![1.0; 25], vec![1.0; 25]);
        let inst = CrfInstance::new(unary, PairwiseField::zeros(5, 5)).unwrap();
        assert!(matches!(
            brute_force_optimize(&inst),
            Err(MaxflowError::GridTooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_1x1_is_argmin() {
        let unary = UnaryField::from_costs(1, 1, vec![3.0], vec![1.0]);
        let inst = CrfInstance::new(unary, PairwiseField::zeros(1, 1)).unwrap();
        let brute = brute_force_optimize(&inst).unwrap();
        assert_eq!(brute.labeling.as_slice(), &[1]);
        assert_eq!(brute.flow_value, 1.0);
    }

    #[test]
    fn discontinuity_mass_is_monotone_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut img = ColorImage::new(6, 6);
        for p in img.pixels.iter_mut() {
            *p = [rng.gen(), rng.gen(), rng.gen()];
        }
        let prob = ScalarField::from_values(6, 6, (0..36).map(|_| rng.gen()).collect());
        let unary = unary_from_prob(&prob, 1e-6);
        let unit = compute_pairwise_weights(&img, 1.0, SigmaParam::Auto).unwrap();

        let mut last_disc = f64::INFINITY;
        let mut last_unary = f64::NEG_INFINITY;
        for lambda in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let inst =
                CrfInstance::new(unary.clone(), unit.scaled(lambda)).unwrap();
            let cut = optimize(&inst).unwrap();
            let disc = crate::energy::discontinuity_mass(&unit, &cut.labeling);
            let e = cut_energy(&inst, &cut);
            assert!(disc <= last_disc + 1e-9, "discontinuity grew with lambda");
            assert!(e.unary_term >= last_unary - 1e-9, "unary term shrank");
            last_disc = disc;
            last_unary = e.unary_term;
        }
    }
}

//! Fairness and participation measures.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::world::{LinkGraph, PhoneId, World};

/// Gini coefficient `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² x̄)`, evaluated in O(n log n)
/// from the sorted values. Returns 0 for fewer than two values and for an
/// all-zero vector (undefined; a warning is logged).
pub fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        log::warn!("gini of an all-zero vector is undefined; returning 0");
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let nf = n as f64;
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| (2.0 * (i as f64 + 1.0) - nf - 1.0) * x)
        .sum();
    (weighted / (nf * total)).max(0.0)
}

const SOURCE_CHUNK: usize = 16;

/// Brandes dependency accumulation from one source, added into `acc`.
fn accumulate_source(graph: &LinkGraph, s: usize, acc: &mut [f64], scratch: &mut BrandesScratch) {
    let BrandesScratch { sigma, dist, delta, order, queue } = scratch;
    order.clear();
    queue.clear();
    sigma[s] = 1.0;
    dist[s] = 0;
    queue.push(s);
    let mut head = 0;
    while head < queue.len() {
        let v = queue[head];
        head += 1;
        order.push(v);
        for &w in graph.neighbors(PhoneId::from(v)) {
            let w = w.idx();
            if dist[w] < 0 {
                dist[w] = dist[v] + 1;
                queue.push(w);
            }
            if dist[w] == dist[v] + 1 {
                sigma[w] += sigma[v];
            }
        }
    }
    for &w in order.iter().rev() {
        for &v in graph.neighbors(PhoneId::from(w)) {
            let v = v.idx();
            if dist[v] == dist[w] - 1 {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
        }
        if w != s {
            acc[w] += delta[w];
        }
    }
    for &v in order.iter() {
        sigma[v] = 0.0;
        dist[v] = -1;
        delta[v] = 0.0;
    }
}

struct BrandesScratch {
    sigma: Vec<f64>,
    dist: Vec<i64>,
    delta: Vec<f64>,
    order: Vec<usize>,
    queue: Vec<usize>,
}

impl BrandesScratch {
    fn new(n: usize) -> Self {
        BrandesScratch {
            sigma: vec![0.0; n],
            dist: vec![-1; n],
            delta: vec![0.0; n],
            order: Vec::with_capacity(n),
            queue: Vec::with_capacity(n),
        }
    }
}

fn chunk_partial(graph: &LinkGraph, sources: &[usize]) -> Vec<f64> {
    let n = graph.n_nodes();
    let mut acc = vec![0.0; n];
    let mut scratch = BrandesScratch::new(n);
    for &s in sources {
        accumulate_source(graph, s, &mut acc, &mut scratch);
    }
    acc
}

/// Unnormalized betweenness: for each node, the number of unordered pairs
/// `{s, t}` (both distinct from it) weighted by the fraction of shortest
/// `s`–`t` paths through it.
///
/// Sources are split into fixed-size chunks whose partial sums are combined
/// in chunk order, so the result is bit-identical with or without the
/// `parallel` feature and for any thread count.
pub fn betweenness_raw(graph: &LinkGraph) -> Vec<f64> {
    let n = graph.n_nodes();
    let sources: Vec<usize> = (0..n).filter(|&s| graph.degree(PhoneId::from(s)) > 0).collect();

    #[cfg(feature = "parallel")]
    let partials: Vec<Vec<f64>> = sources
        .par_chunks(SOURCE_CHUNK)
        .map(|chunk| chunk_partial(graph, chunk))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<Vec<f64>> = sources
        .chunks(SOURCE_CHUNK)
        .map(|chunk| chunk_partial(graph, chunk))
        .collect();

    let mut total = vec![0.0; n];
    for part in partials {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    // Each unordered pair was counted from both ends.
    total.iter_mut().for_each(|x| *x /= 2.0);
    total
}

/// Betweenness normalized by the `(n_alive − 1)(n_alive − 2) / 2` pairs that
/// exclude a given phone. All zeros when fewer than three phones are alive.
pub fn betweenness(graph: &LinkGraph, n_alive: usize) -> Vec<f64> {
    if n_alive < 3 {
        return vec![0.0; graph.n_nodes()];
    }
    let norm = ((n_alive - 1) * (n_alive - 2)) as f64 / 2.0;
    betweenness_raw(graph).into_iter().map(|x| x / norm).collect()
}

/// `(alive fraction, alive-with-a-link fraction)` over all initial phones.
pub fn participation(world: &World) -> (f64, f64) {
    let n = world.n() as f64;
    let alive = world.phones.iter().filter(|p| p.alive).count() as f64;
    let connected = world
        .phones
        .iter()
        .filter(|p| p.alive && world.graph.degree(p.id) > 0)
        .count() as f64;
    (alive / n, connected / n)
}

/// First hour at which the alive fraction drops below `theta`; the final
/// hour of the series if it never does.
pub fn longevity(series: &[(f64, f64)], theta: f64) -> f64 {
    series
        .iter()
        .find(|&&(_, alive)| alive < theta)
        .or_else(|| series.last())
        .map(|&(hour, _)| hour)
        .unwrap_or(0.0)
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut cov, mut vx, mut vy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx).powi(2);
        vy += (b - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        0.0
    } else {
        cov / (vx * vy).sqrt()
    }
}

/// Spearman rank correlation with tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Standard deviation over mean (population form); 0 for an empty or
/// zero-mean sample.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

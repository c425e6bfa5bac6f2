use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Number of seeded restarts; the lowest-SSE run wins.
const RESTARTS: u64 = 4;

/// Lloyd's k-means with k-means++ seeding.
///
/// Deterministic in `seed`. Labels are renumbered in order of first
/// appearance, so point 0 is always in cluster 0. Empty clusters are
/// repaired by moving the point farthest from its centroid out of the
/// largest cluster.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iter: usize) -> Result<Vec<usize>> {
    if k == 0 || points.len() < k {
        return Err(Error::TooFewPoints {
            points: points.len(),
            k,
        });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for restart in 0..RESTARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart);
        let labels = lloyd(points, k, &mut rng, max_iter);
        let cost = sse(points, &labels, k);
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, labels));
        }
    }
    Ok(canonical(&best.expect("at least one restart").1))
}

/// Sum of squared distances to cluster means.
pub fn sse(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let centers = means(points, labels, k);
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| dist2(p, &centers[l]))
        .sum()
}

fn lloyd<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R, max_iter: usize) -> Vec<usize> {
    let mut centers = plus_plus(points, k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..max_iter.max(1) {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        repair_empty(points, &mut next, &mut centers);
        if next == labels {
            break;
        }
        labels = next;
        centers = means(points, &labels, k);
    }
    labels
}

fn plus_plus<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| dist2(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if *w > 0.0 && u < *w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            // All remaining points coincide with a center: pick an unused index.
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(pick);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(dist2(p, &points[pick]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    loop {
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let largest = (0..k).fold(0, |b, c| if sizes[c] > sizes[b] { c } else { b });
        let victim = (0..points.len())
            .filter(|&i| labels[i] == largest)
            .fold(None::<(usize, f64)>, |acc, i| {
                let d = dist2(&points[i], &centers[largest]);
                match acc {
                    Some((_, bd)) if bd >= d => acc,
                    _ => Some((i, d)),
                }
            })
            .expect("largest cluster is nonempty")
            .0;
        labels[victim] = empty;
        centers[empty] = points[victim].clone();
    }
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = dist2(p, center);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(p) {
            *s += x;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            s.iter_mut().for_each(|x| *x /= c as f64);
        }
    }
    sums
}

pub(crate) fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn canonical(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<Option<usize>> = vec![None; labels.iter().max().map_or(0, |m| m + 1)];
    let mut next = 0;
    labels
        .iter()
        .map(|&l| {
            *map[l].get_or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// OSPA distance of order `order` and cutoff `cutoff` between two sets of
/// planar positions.
///
/// Suited to the small sets of single-target tracking: the optimal
/// assignment is found by exhaustive search.
pub fn ospa(x: &[[f64; 2]], y: &[[f64; 2]], order: f64, cutoff: f64) -> f64 {
    let (small, large) = if x.len() <= y.len() { (x, y) } else { (y, x) };
    let n = large.len();
    if n == 0 {
        return 0.0;
    }
    let cost = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]).min(cutoff).powf(order);
    let mut used = vec![false; n];
    let best = best_assignment(small, large, &mut used, &cost);
    let cardinality = cutoff.powf(order) * (n - small.len()) as f64;
    ((best + cardinality) / n as f64).powf(1.0 / order)
}

fn best_assignment(
    small: &[[f64; 2]],
    large: &[[f64; 2]],
    used: &mut [bool],
    cost: &dyn Fn(&[f64; 2], &[f64; 2]) -> f64,
) -> f64 {
    let Some((first, rest)) = small.split_first() else {
        return 0.0;
    };
    let mut best = f64::INFINITY;
    for j in 0..large.len() {
        if used[j] {
            continue;
        }
        used[j] = true;
        best = best.min(cost(first, &large[j]) + best_assignment(rest, large, used, cost));
        used[j] = false;
    }
    best
}

//! Stratified sample placement for the quadrature renderer.

use rand::Rng;

use super::camera::Ray;
use super::foam::FoamScene;

/// Sample distances along `ray` and the interval each one stands for.
///
/// The in-box segment `[t0, t1]` is split into `n` equal strata with one
/// uniform draw per stratum. Each sample's interval runs to the next sample,
/// and the last one runs to the box exit. A ray that misses the box gets no
/// samples.
pub fn stratified_samples(ray: &Ray, scene: &FoamScene, n: usize, rng: &mut impl Rng) -> Vec<(f64, f64)> {
    let Some((t0, t1)) = scene.clip(ray) else {
        return Vec::new();
    };
    let width = (t1 - t0) / n as f64;
    let ts: Vec<f64> = (0..n)
        .map(|i| t0 + (i as f64 + rng.random::<f64>()) * width)
        .collect();
    ts.iter()
        .enumerate()
        .map(|(i, &t)| {
            let next = ts.get(i + 1).copied().unwrap_or(t1);
            (t, next - t)
        })
        .collect()
}

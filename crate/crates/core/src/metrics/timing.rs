use std::hint::black_box;
use std::time::Instant;

/// Wall-clock samples of repeated runs of one closure.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub runs: Vec<f64>,
    pub median: f64,
}

impl Timing {
    pub fn fps(&self) -> f64 {
        if self.median > 0.0 {
            1.0 / self.median
        } else {
            f64::INFINITY
        }
    }
}

/// Times `repeats` runs of `op` (at least one) and reports the median in seconds.
///
/// `op` must finish all of its work before returning; its result is kept
/// opaque to the optimizer so the work cannot be elided.
pub fn stopwatch<T, F: FnMut() -> T>(repeats: usize, mut op: F) -> Timing {
    let mut runs: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let start = Instant::now();
            black_box(op());
            start.elapsed().as_secs_f64()
        })
        .collect();
    let median = median(&mut runs.clone());
    runs.shrink_to_fit();
    Timing { runs, median }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    #[test]
    fn busy_wait_calibration() {
        let nominal = 0.02;
        let t = stopwatch(5, || {
            let start = Instant::now();
            while start.elapsed() < Duration::from_secs_f64(nominal) {
                black_box(0u8);
            }
        });
        assert_eq!(t.runs.len(), 5);
        assert!((t.median - nominal).abs() < 0.2 * nominal, "median {}", t.median);
        assert!(t.runs.iter().all(|&s| s >= 0.0));
        assert!((t.fps() - 1.0 / t.median).abs() < 1e-9);
    }

    #[test]
    fn median_policy() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(stopwatch(0, || ()).runs.len(), 1);
    }
}

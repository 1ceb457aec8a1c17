//! Outlier detector for discontinuities in sampled curves.
//!
//! A step `|y[i+1] - y[i]|` is flagged when it stands out against the steps
//! in a window around it (the two immediately adjacent steps are left out of
//! the statistics so a jump smeared over a couple of samples does not mask
//! itself) and also exceeds an absolute floor tied to the median step.

/// Detector thresholds. Serialized alongside results so summaries can be audited.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpDetector {
    /// Half-width of the neighbour window, in steps.
    pub window: usize,
    /// Number of standard deviations above the neighbour mean.
    pub sigmas: f64,
    /// Floor as a multiple of the median step over the whole curve.
    pub median_factor: f64,
    /// Absolute lower bound on the floor.
    pub min_floor: f64,
}

impl Default for JumpDetector {
    fn default() -> Self {
        Self {
            window: 10,
            sigmas: 5.0,
            median_factor: 10.0,
            min_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// Midpoint of the interval containing the jump.
    pub x: f64,
    /// `|Δy|` across that interval.
    pub magnitude: f64,
    /// Index `i` of the interval `[x_i, x_{i+1}]`.
    pub index: usize,
}

impl JumpDetector {
    /// Absolute floor for a given curve.
    pub fn floor(&self, y: &[f64]) -> f64 {
        let diffs = steps(y);
        (self.median_factor * median(&diffs)).max(self.min_floor)
    }

    /// Jumps of `y(x)`; `x` must be sorted. Runs of consecutive flagged steps
    /// collapse to their largest member. Fewer than three points give no jumps.
    pub fn detect(&self, x: &[f64], y: &[f64]) -> Vec<Jump> {
        let n = x.len().min(y.len());
        if n < 3 {
            return Vec::new();
        }
        let diffs = steps(&y[..n]);
        let floor = (self.median_factor * median(&diffs)).max(self.min_floor);
        let flagged: Vec<bool> = (0..diffs.len())
            .map(|i| {
                let d = diffs[i];
                if !(d > floor) {
                    return false;
                }
                let lo = i.saturating_sub(self.window);
                let hi = (i + self.window).min(diffs.len() - 1);
                let neighbours: Vec<f64> = (lo..=hi)
                    .filter(|&j| j + 1 < i || j > i + 1)
                    .map(|j| diffs[j])
                    .collect();
                if neighbours.is_empty() {
                    return true;
                }
                let mean = neighbours.iter().sum::<f64>() / neighbours.len() as f64;
                let var = neighbours.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / neighbours.len() as f64;
                d > mean + self.sigmas * var.sqrt()
            })
            .collect();

        let mut out = Vec::new();
        let mut i = 0;
        while i < flagged.len() {
            if !flagged[i] {
                i += 1;
                continue;
            }
            let mut best = i;
            while i < flagged.len() && flagged[i] {
                if diffs[i] > diffs[best] {
                    best = i;
                }
                i += 1;
            }
            out.push(Jump {
                x: 0.5 * (x[best] + x[best + 1]),
                magnitude: diffs[best],
                index: best,
            });
        }
        out
    }
}

/// [`JumpDetector::detect`] with default thresholds.
pub fn detect_jump(x: &[f64], y: &[f64]) -> Vec<Jump> {
    JumpDetector::default().detect(x, y)
}

fn steps(y: &[f64]) -> Vec<f64> {
    y.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len().is_multiple_of(2) {
        0.5 * (s[m - 1] + s[m])
    } else {
        s[m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, step: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn ramp_has_no_jumps() {
        let x = grid(100, 0.1);
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!(detect_jump(&x, &y).is_empty());
    }

    #[test]
    fn constant_and_short_curves() {
        let x = grid(50, 1.0);
        assert!(detect_jump(&x, &vec![0.3; 50]).is_empty());
        assert!(detect_jump(&[0.0, 1.0], &[0.0, 5.0]).is_empty());
    }

    #[test]
    fn step_is_located_to_half_a_cell() {
        let x = grid(200, 0.01);
        let x0 = 1.234;
        let y: Vec<f64> = x.iter().map(|&v| if v < x0 { 0.1 } else { 0.7 }).collect();
        let jumps = detect_jump(&x, &y);
        assert_eq!(jumps.len(), 1);
        assert!((jumps[0].x - x0).abs() <= 0.005 + 1e-12);
        assert!((jumps[0].magnitude - 0.6).abs() < 1e-12);
    }

    #[test]
    fn smooth_curve_with_two_steps() {
        let x = grid(400, 0.01);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| (v * 0.7).sin() * 0.1 + if v > 1.0 { 0.3 } else { 0.0 } + if v > 3.0 { 0.2 } else { 0.0 })
            .collect();
        let jumps = detect_jump(&x, &y);
        let at: Vec<f64> = jumps.iter().map(|j| j.x).collect();
        assert_eq!(at.len(), 2, "{at:?}");
        assert!((at[0] - 1.0).abs() < 0.01 && (at[1] - 3.0).abs() < 0.01);
    }

    #[test]
    fn smeared_step_reports_single_jump() {
        let x = grid(100, 0.1);
        let mut y = vec![0.0; 100];
        for (i, v) in y.iter_mut().enumerate() {
            *v = match i {
                0..=49 => 0.0,
                50 => 0.3,
                51 => 0.9,
                _ => 1.0,
            };
        }
        let jumps = detect_jump(&x, &y);
        assert_eq!(jumps.len(), 1);
        assert_eq!(jumps[0].index, 50);
    }

    #[test]
    fn detection_is_deterministic() {
        let x = grid(300, 0.01);
        let y: Vec<f64> = x
            .iter()
            .map(|&v| (5.0 * v).cos() + if v > 2.0 { 1.0 } else { 0.0 })
            .collect();
        assert_eq!(detect_jump(&x, &y), detect_jump(&x, &y));
    }
}

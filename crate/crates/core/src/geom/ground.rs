//! Ground removal by polar-sector line fitting.
//!
//! The horizontal plane is split into `num_segments` angular sectors and each
//! sector into radial bins of `bin_length_m`. The lowest return of each bin is
//! its representative; representatives are walked outward and grouped into
//! piecewise lines in the (range, height) plane. A point is ground when it lies
//! within `dist_threshold_m` (vertically) of a line covering its range.

use serde::{Deserialize, Serialize};

use super::cloud::PointCloud;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundSegConfig {
    pub num_segments: usize,
    pub bin_length_m: f64,
    pub max_slope: f64,
    pub dist_threshold_m: f64,
    pub max_start_height_m: f64,
}

impl Default for GroundSegConfig {
    fn default() -> Self {
        Self {
            num_segments: 180,
            bin_length_m: 1.0,
            max_slope: 0.1,
            dist_threshold_m: 0.25,
            max_start_height_m: 0.5,
        }
    }
}

impl GroundSegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_segments == 0 {
            return Err(invalid("ground.num_segments must be >= 1"));
        }
        for (name, v) in [
            ("bin_length_m", self.bin_length_m),
            ("max_slope", self.max_slope),
            ("dist_threshold_m", self.dist_threshold_m),
            ("max_start_height_m", self.max_start_height_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("ground.{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// Per-point ground flags, aligned with the cloud they were computed from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundMask {
    pub is_ground: Vec<bool>,
}

impl GroundMask {
    pub fn len(&self) -> usize {
        self.is_ground.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_ground.is_empty()
    }

    pub fn count(&self) -> usize {
        self.is_ground.iter().filter(|g| **g).count()
    }

    pub fn ground_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.is_ground
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.then_some(i))
    }
}

#[derive(Debug, Clone, Copy)]
struct Rep {
    range: f64,
    z: f64,
}

#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
    r_start: f64,
    r_end: f64,
}

impl Line {
    fn eval(&self, r: f64) -> f64 {
        self.slope * r + self.intercept
    }

    fn gap(&self, r: f64) -> f64 {
        if r < self.r_start {
            self.r_start - r
        } else if r > self.r_end {
            r - self.r_end
        } else {
            0.0
        }
    }
}

fn fit(reps: &[Rep]) -> Line {
    let n = reps.len() as f64;
    let r_start = reps[0].range;
    let r_end = reps[reps.len() - 1].range;
    if reps.len() == 1 {
        return Line {
            slope: 0.0,
            intercept: reps[0].z,
            r_start,
            r_end,
        };
    }
    let mean_r = reps.iter().map(|p| p.range).sum::<f64>() / n;
    let mean_z = reps.iter().map(|p| p.z).sum::<f64>() / n;
    let (mut sxx, mut sxz) = (0.0, 0.0);
    for p in reps {
        let dr = p.range - mean_r;
        sxx += dr * dr;
        sxz += dr * (p.z - mean_z);
    }
    let slope = if sxx > 0.0 { sxz / sxx } else { 0.0 };
    Line {
        slope,
        intercept: mean_z - slope * mean_r,
        r_start,
        r_end,
    }
}

fn max_residual(reps: &[Rep], line: &Line) -> f64 {
    reps.iter()
        .map(|p| (p.z - line.eval(p.range)).abs())
        .fold(0.0, f64::max)
}

fn sector_of(x: f64, y: f64, num_segments: usize) -> usize {
    let angle = y.atan2(x) + std::f64::consts::PI;
    let s = (angle / std::f64::consts::TAU * num_segments as f64) as usize;
    s.min(num_segments - 1)
}

fn fit_sector_lines(reps: &[Rep], cfg: &GroundSegConfig) -> Vec<Line> {
    let seed_ok = |rep: &Rep, prev: Option<&Line>| {
        rep.z.abs() <= cfg.max_start_height_m
            || prev.is_some_and(|l| {
                l.gap(rep.range) <= 2.0 * cfg.bin_length_m
                    && (rep.z - l.eval(rep.range)).abs() <= cfg.dist_threshold_m
            })
    };

    let mut lines: Vec<Line> = Vec::new();
    let mut current: Vec<Rep> = Vec::new();
    for rep in reps {
        if current.is_empty() {
            if seed_ok(rep, lines.last()) {
                current.push(*rep);
            }
            continue;
        }
        current.push(*rep);
        let line = fit(&current);
        if line.slope.abs() <= cfg.max_slope && max_residual(&current, &line) <= cfg.dist_threshold_m
        {
            continue;
        }
        current.pop();
        lines.push(fit(&current));
        current.clear();
        if seed_ok(rep, lines.last()) {
            current.push(*rep);
        }
    }
    if !current.is_empty() {
        lines.push(fit(&current));
    }
    lines
}

/// Labels ground returns. Deterministic; an empty cloud yields an empty mask.
pub fn segment_ground(cloud: &PointCloud, cfg: &GroundSegConfig) -> GroundMask {
    let n = cloud.len();
    let mut is_ground = vec![false; n];
    if n == 0 {
        return GroundMask { is_ground };
    }

    let mut sectors: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_segments];
    for (i, p) in cloud.points().iter().enumerate() {
        sectors[sector_of(p[0], p[1], cfg.num_segments)].push(i);
    }

    for members in sectors.iter().filter(|m| !m.is_empty()) {
        // lowest return per radial bin, ties to the lowest index
        let mut lowest: Vec<(u64, usize)> = Vec::new();
        {
            let mut by_bin = std::collections::BTreeMap::<u64, usize>::new();
            for &i in members {
                let p = cloud.point(i);
                let bin = (p[0].hypot(p[1]) / cfg.bin_length_m) as u64;
                by_bin
                    .entry(bin)
                    .and_modify(|best| {
                        if p[2] < cloud.point(*best)[2] {
                            *best = i;
                        }
                    })
                    .or_insert(i);
            }
            lowest.extend(by_bin);
        }
        let reps: Vec<Rep> = lowest
            .iter()
            .map(|&(_, i)| {
                let p = cloud.point(i);
                Rep {
                    range: p[0].hypot(p[1]),
                    z: p[2],
                }
            })
            .collect();
        let lines = fit_sector_lines(&reps, cfg);
        if lines.is_empty() {
            continue;
        }

        for &i in members {
            let p = cloud.point(i);
            let r = p[0].hypot(p[1]);
            let nearest = lines
                .iter()
                .min_by(|a, b| a.gap(r).total_cmp(&b.gap(r)))
                .expect("non-empty");
            if nearest.gap(r) <= cfg.bin_length_m
                && (p[2] - nearest.eval(r)).abs() <= cfg.dist_threshold_m
            {
                is_ground[i] = true;
            }
        }
    }
    GroundMask { is_ground }
}

use std::fmt;
use std::str::FromStr;

use crate::embedding::GridLayout;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DistanceMetric {
    #[default]
    Euclidean,
    Chebyshev,
}

impl FromStr for DistanceMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "chebyshev" => Ok(Self::Chebyshev),
            other => Err(format!("unknown distance metric `{other}`")),
        }
    }
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Euclidean => "euclidean",
            Self::Chebyshev => "chebyshev",
        })
    }
}

impl DistanceMetric {
    pub fn distance(self, a: (f64, f64), b: (f64, f64)) -> f64 {
        let (dy, dx) = ((a.0 - b.0).abs(), (a.1 - b.1).abs());
        match self {
            Self::Euclidean => (dy * dy + dx * dx).sqrt(),
            Self::Chebyshev => dy.max(dx),
        }
    }
}

/// Relative slack so that centers exactly on the threshold count as inside.
const BOUNDARY_SLACK: f64 = 1e-9;

/// Which patches may attend to which, by physical distance between centers.
#[derive(Clone, Debug, PartialEq)]
pub struct PerceptionMask {
    n: usize,
    allowed: Vec<bool>,
    centers: Vec<(f64, f64)>,
    threshold_m: f64,
}

impl PerceptionMask {
    /// Two patch pitches.
    pub fn default_threshold(patch: usize, resolution: f64) -> f64 {
        2.0 * patch as f64 * resolution
    }

    /// Patch centers given in meters.
    pub fn from_centers(centers: Vec<(f64, f64)>, threshold_m: f64, metric: DistanceMetric) -> Self {
        let n = centers.len();
        let limit = threshold_m * (1.0 + BOUNDARY_SLACK);
        let mut allowed = vec![false; n * n];
        for i in 0..n {
            for j in 0..n {
                allowed[i * n + j] = i == j || metric.distance(centers[i], centers[j]) <= limit;
            }
        }
        Self {
            n,
            allowed,
            centers,
            threshold_m,
        }
    }

    /// Mask over the patch positions present in `layout`.
    pub fn for_layout(layout: &GridLayout, threshold_m: f64, metric: DistanceMetric) -> Self {
        let pitch = layout.patch as f64 * layout.resolution;
        let centers = layout
            .positions
            .iter()
            .map(|&p| {
                let (r, c) = layout.coords(p);
                ((r as f64 + 0.5) * pitch, (c as f64 + 0.5) * pitch)
            })
            .collect();
        Self::from_centers(centers, threshold_m, metric)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn threshold_m(&self) -> f64 {
        self.threshold_m
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.allowed[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.allowed
    }

    /// Number of patches `i` may attend to, itself included.
    pub fn neighbor_count(&self, i: usize) -> usize {
        self.allowed[i * self.n..(i + 1) * self.n]
            .iter()
            .filter(|&&a| a)
            .count()
    }

    /// Offsets in meters from patch `i` to every patch it attends to.
    pub fn physical_offsets(&self, i: usize) -> Vec<(f64, f64)> {
        (0..self.n)
            .filter(|&j| self.allowed(i, j))
            .map(|j| {
                (
                    self.centers[j].0 - self.centers[i].0,
                    self.centers[j].1 - self.centers[i].1,
                )
            })
            .collect()
    }

    /// `(N+1)²` mask with an always-open CLS row and column at index 0.
    pub fn with_cls(&self) -> Vec<bool> {
        let m = self.n + 1;
        let mut out = vec![true; m * m];
        for i in 0..self.n {
            for j in 0..self.n {
                out[(i + 1) * m + j + 1] = self.allowed(i, j);
            }
        }
        out
    }
}

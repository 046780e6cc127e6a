//! Small numeric helpers shared by the estimators and the oracle.

/// Neumaier-compensated accumulator for a dense vector.
#[derive(Debug, Clone)]
pub struct CompensatedVec {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedVec {
    pub fn zeros(dim: usize) -> Self {
        Self {
            sum: vec![0.0; dim],
            comp: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    /// Adds `scale * v` componentwise.
    pub fn add_scaled(&mut self, v: &[f64], scale: f64) {
        debug_assert_eq!(v.len(), self.sum.len());
        for ((s, c), &x) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(v) {
            neumaier_step(s, c, scale * x);
        }
    }

    /// Adds `scale * other` using the compensated value of `other`.
    pub fn add_scaled_acc(&mut self, other: &CompensatedVec, scale: f64) {
        debug_assert_eq!(other.dim(), self.dim());
        for i in 0..self.sum.len() {
            let x = other.sum[i] + other.comp[i];
            neumaier_step(&mut self.sum[i], &mut self.comp[i], scale * x);
        }
    }

    pub fn value(&self) -> Vec<f64> {
        self.sum.iter().zip(&self.comp).map(|(s, c)| s + c).collect()
    }

    pub fn norm(&self) -> f64 {
        self.sum
            .iter()
            .zip(&self.comp)
            .map(|(s, c)| (s + c) * (s + c))
            .sum::<f64>()
            .sqrt()
    }
}

#[inline]
fn neumaier_step(sum: &mut f64, comp: &mut f64, x: f64) {
    let t = *sum + x;
    if sum.abs() >= x.abs() {
        *comp += (*sum - t) + x;
    } else {
        *comp += (x - t) + *sum;
    }
    *sum = t;
}

/// Running compensated scalar sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedScalar {
    sum: f64,
    comp: f64,
}

impl CompensatedScalar {
    pub fn add(&mut self, x: f64) {
        neumaier_step(&mut self.sum, &mut self.comp, x);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated scalar sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for x in xs {
        neumaier_step(&mut s, &mut c, x);
    }
    s + c
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

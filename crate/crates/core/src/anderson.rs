use nalgebra::{DMatrix, DVector};

/// Type-II Anderson acceleration with a bounded memory.
pub(crate) struct Anderson {
    memory: usize,
    last: Option<(DVector<f64>, DVector<f64>)>,
    point_diffs: Vec<DVector<f64>>,
    residual_diffs: Vec<DVector<f64>>,
}

impl Anderson {
    pub fn new(memory: usize) -> Self {
        Self {
            memory,
            last: None,
            point_diffs: Vec::new(),
            residual_diffs: Vec::new(),
        }
    }

    pub fn clear(&mut self) {
        self.last = None;
        self.point_diffs.clear();
        self.residual_diffs.clear();
    }

    /// Record `(z, f(z))` and propose an extrapolated point.
    pub fn extrapolate(&mut self, point: &DVector<f64>, residual: &DVector<f64>) -> Option<DVector<f64>> {
        if let Some((z, f)) = self.last.take() {
            if self.point_diffs.len() == self.memory {
                self.point_diffs.remove(0);
                self.residual_diffs.remove(0);
            }
            self.point_diffs.push(point - z);
            self.residual_diffs.push(residual - f);
        }
        self.last = Some((point.clone(), residual.clone()));
        if self.residual_diffs.is_empty() {
            return None;
        }
        let df = DMatrix::from_columns(&self.residual_diffs);
        let gamma = crate::linalg::lstsq(&df, residual);
        let mut out = point + residual;
        for (j, g) in gamma.iter().enumerate() {
            out -= (&self.point_diffs[j] + &self.residual_diffs[j]) * *g;
        }
        out.iter().all(|v| v.is_finite()).then_some(out)
    }
}

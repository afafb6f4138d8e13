use crate::swmodel::GridSpec;

/// Linear selection operator picking a subset of state entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsOperator {
    n_state: usize,
    indices: Vec<usize>,
}

impl ObsOperator {
    pub fn new(n_state: usize, indices: Vec<usize>) -> Self {
        assert!(indices.iter().all(|&i| i < n_state), "observation index out of range");
        Self { n_state, indices }
    }

    /// Observes the free-surface height only.
    pub fn eta_only(grid: &GridSpec) -> Self {
        Self::new(grid.state_len(), (0..grid.n_eta()).collect())
    }

    pub fn n_state(&self) -> usize {
        self.n_state
    }

    pub fn n_obs(&self) -> usize {
        self.indices.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| x[i]).collect()
    }

    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n_state];
        for (&i, &v) in self.indices.iter().zip(y) {
            x[i] += v;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linop::dot;

    #[test]
    fn eta_selector_dot_product() {
        let grid = GridSpec::new(5, 4, 1.0, 1.0).unwrap();
        let h = ObsOperator::eta_only(&grid);
        assert_eq!(h.n_obs(), 20);
        let x: Vec<f64> = (0..grid.state_len()).map(|i| (i as f64 * 0.7).cos()).collect();
        let y: Vec<f64> = (0..20).map(|i| (i as f64 * 1.3).sin()).collect();
        assert_eq!(dot(&h.apply(&x), &y), dot(&x, &h.apply_transpose(&y)));
        assert_eq!(h.apply(&x), x[..20].to_vec());
    }
}

use super::matrix::Matrix;

/// Handle to a [`Parameter`] inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A learnable tensor with its gradient accumulator.
///
/// Gradient writes are tracked per row so that large embedding tables can be
/// reset and updated in time proportional to the rows a step actually
/// touched.
#[derive(Clone, Debug)]
pub struct Parameter {
    name: String,
    value: Matrix,
    grad: Matrix,
    touched: Vec<usize>,
    touched_mask: Vec<bool>,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let (rows, cols) = value.shape();
        Self {
            name: name.into(),
            grad: Matrix::zeros(rows, cols),
            touched: Vec::new(),
            touched_mask: vec![false; rows],
            value,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    /// Mutable access to the value. Used by optimizers and tests; the
    /// gradient is left untouched.
    pub fn value_mut(&mut self) -> &mut Matrix {
        &mut self.value
    }

    pub fn grad(&self) -> &Matrix {
        &self.grad
    }

    /// Rows that received gradient since the last reset, in first-touch order.
    pub fn touched_rows(&self) -> &[usize] {
        &self.touched
    }

    fn mark(&mut self, row: usize) {
        if !self.touched_mask[row] {
            self.touched_mask[row] = true;
            self.touched.push(row);
        }
    }

    pub fn accumulate_row(&mut self, row: usize, grad: &[f64]) {
        self.mark(row);
        for (g, v) in self.grad.row_mut(row).iter_mut().zip(grad) {
            *g += v;
        }
    }

    pub fn accumulate_dense(&mut self, grad: &Matrix) {
        debug_assert_eq!(grad.shape(), self.value.shape());
        for r in 0..grad.rows() {
            self.accumulate_row(r, grad.row(r));
        }
    }

    /// Value, gradient and touched rows at once, for optimizer updates.
    pub fn update_view(&mut self) -> (&mut Matrix, &Matrix, &[usize]) {
        (&mut self.value, &self.grad, &self.touched)
    }

    pub fn zero_grad(&mut self) {
        let cols = self.grad.cols();
        for &r in &self.touched {
            self.grad.as_mut_slice()[r * cols..(r + 1) * cols].fill(0.0);
            self.touched_mask[r] = false;
        }
        self.touched.clear();
    }
}

/// Ordered collection of parameters addressed by [`ParamId`].
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn num_entries(&self) -> usize {
        self.params.iter().map(|p| p.value.as_slice().len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_matches_value_shape_and_resets_to_zero() {
        let mut p = Parameter::new("w", Matrix::filled(4, 3, 0.5));
        assert_eq!(p.grad().shape(), p.value().shape());
        p.accumulate_row(2, &[1.0, 2.0, 3.0]);
        p.accumulate_row(2, &[1.0, 1.0, 1.0]);
        p.accumulate_row(0, &[-1.0, 0.0, 0.0]);
        assert_eq!(p.touched_rows(), &[2, 0]);
        assert_eq!(p.grad().row(2), &[2.0, 3.0, 4.0]);
        p.zero_grad();
        assert!(p.grad().as_slice().iter().all(|&g| g == 0.0));
        assert!(p.touched_rows().is_empty());
        assert_eq!(p.grad().shape(), p.value().shape());
    }

    #[test]
    fn store_lookup_by_name() {
        let mut s = ParamStore::new();
        let a = s.add("a", Matrix::zeros(1, 1));
        let b = s.add("b", Matrix::zeros(2, 2));
        assert_eq!(s.find("b"), Some(b));
        assert_eq!(s.find("a"), Some(a));
        assert_eq!(s.find("c"), None);
        assert_eq!(s.num_entries(), 5);
    }
}

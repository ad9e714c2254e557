use super::tensor::{numel, AdError, Gradients, Result, Tape, Tensor};
use std::collections::HashMap;

/// Storage precision of trainable values. Arithmetic is always carried out
/// in `f64`; in `F32` mode parameters are rounded to the nearest `f32` after
/// every update so stored and checkpointed values agree exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

impl Precision {
    pub fn round(self, x: f64) -> f64 {
        match self {
            Precision::F32 => x as f32 as f64,
            Precision::F64 => x,
        }
    }

    pub fn dtype(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Param {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Named, ordered collection of trainable arrays.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    params: Vec<Param>,
    by_name: HashMap<String, usize>,
    precision: Precision,
}

impl ParamSet {
    pub fn new(precision: Precision) -> Self {
        Self {
            precision,
            ..Self::default()
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn set_precision(&mut self, p: Precision) {
        self.precision = p;
        self.round_all();
    }

    /// Registers a parameter. Names must be unique.
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<f64>) -> Result<ParamId> {
        let name = name.into();
        if values.len() != numel(shape) {
            return Err(AdError::ShapeMismatch(format!(
                "{name}: {} values for shape {shape:?}",
                values.len()
            )));
        }
        if self.by_name.contains_key(&name) {
            return Err(AdError::Invalid(format!("duplicate parameter {name}")));
        }
        let id = self.params.len();
        self.by_name.insert(name.clone(), id);
        let p = self.precision;
        self.params.push(Param {
            name,
            shape: shape.to_vec(),
            values: values.into_iter().map(|x| p.round(x)).collect(),
        });
        Ok(ParamId(id))
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

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.params[id.0].shape
    }

    pub fn values(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].values
    }

    /// Replaces the values of `id`, rounding to the storage precision.
    pub fn set_values(&mut self, id: ParamId, values: &[f64]) -> Result<()> {
        let p = self.precision;
        let param = &mut self.params[id.0];
        if param.values.len() != values.len() {
            return Err(AdError::ShapeMismatch(format!(
                "{}: {} values for {} slots",
                param.name,
                values.len(),
                param.values.len()
            )));
        }
        let dst = &mut param.values;
        for (d, &v) in dst.iter_mut().zip(values) {
            *d = p.round(v);
        }
        Ok(())
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    fn round_all(&mut self) {
        let p = self.precision;
        for v in self.params.iter_mut().flat_map(|p| p.values.iter_mut()) {
            *v = p.round(*v);
        }
    }

    /// Tensors for one forward pass: tracked leaves on `tape`, or constants.
    pub fn bind(&self, tape: Option<&Tape>) -> Bound {
        let tensors = self
            .params
            .iter()
            .map(|p| match tape {
                Some(t) => t.leaf(p.values.clone(), &p.shape).expect("fresh tape"),
                None => Tensor::new(p.values.clone(), &p.shape).expect("checked shape"),
            })
            .collect();
        Bound { tensors }
    }
}

/// A [`ParamSet`] materialised as tensors.
#[derive(Clone, Debug)]
pub struct Bound {
    tensors: Vec<Tensor>,
}

impl Bound {
    /// Tensors in [`ParamSet`] order, for callers that build their own leaves.
    pub fn from_tensors(tensors: Vec<Tensor>) -> Self {
        Self { tensors }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    /// Gradient per parameter, in [`ParamSet`] order.
    pub fn grads(&self, g: &Gradients) -> Vec<Option<Vec<f64>>> {
        self.tensors.iter().map(|t| g.get(t).map(<[f64]>::to_vec)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_find_and_reject_duplicates() {
        let mut ps = ParamSet::new(Precision::F64);
        let a = ps.add("a", &[2], vec![1.0, 2.0]).unwrap();
        assert_eq!(ps.find("a"), Some(a));
        assert!(ps.add("a", &[1], vec![0.0]).is_err());
        assert!(ps.add("b", &[3], vec![0.0]).is_err());
        assert_eq!(ps.num_values(), 2);
    }

    #[test]
    fn f32_mode_rounds() {
        let mut ps = ParamSet::new(Precision::F32);
        let a = ps.add("a", &[], vec![0.1]).unwrap();
        assert_eq!(ps.values(a)[0], 0.1f32 as f64);
    }

    #[test]
    fn bound_grads_follow_param_order() {
        let mut ps = ParamSet::new(Precision::F64);
        let a = ps.add("a", &[2], vec![1.0, 2.0]).unwrap();
        let b = ps.add("b", &[2], vec![3.0, 4.0]).unwrap();
        let tape = Tape::new();
        let bound = ps.bind(Some(&tape));
        let loss = bound.get(a).mul(bound.get(a)).unwrap().sum();
        let g = bound.grads(&loss.backward().unwrap());
        assert_eq!(g[a.index()].as_deref(), Some(&[2.0, 4.0][..]));
        assert!(g[b.index()].is_none());
    }
}

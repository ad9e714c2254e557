use std::cell::RefCell;
use std::fmt;
use std::rc::Rc;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AdError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("tape already consumed by a previous backward pass")]
    StaleTape,
    #[error("operands live on different tapes")]
    MixedTapes,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, AdError>;

/// Backward rule: `(grad_out, needs) -> grad per input`, `None` where not needed.
pub type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>>>;

struct Node {
    parents: Vec<Option<usize>>,
    backward: Option<BackwardFn>,
    len: usize,
}

#[derive(Default)]
struct TapeInner {
    nodes: Vec<Node>,
    consumed: bool,
}

/// Records operations on tracked tensors for one forward/backward pass.
#[derive(Clone, Default)]
pub struct Tape(Rc<RefCell<TapeInner>>);

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tracked leaf that will receive a gradient.
    pub fn leaf(&self, data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        check_len(&data, shape)?;
        let mut inner = self.0.borrow_mut();
        if inner.consumed {
            return Err(AdError::StaleTape);
        }
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            parents: Vec::new(),
            backward: None,
            len: data.len(),
        });
        Ok(Tensor {
            data: Rc::new(data),
            shape: shape.to_vec(),
            node: Some((self.clone(), id)),
        })
    }

    pub fn len(&self) -> usize {
        self.0.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn same(&self, other: &Tape) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}

/// Dense row-major array of `f64`, optionally tracked on a [`Tape`].
#[derive(Clone)]
pub struct Tensor {
    data: Rc<Vec<f64>>,
    shape: Vec<usize>,
    node: Option<(Tape, usize)>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("tracked", &self.node.is_some())
            .field("data", &self.data)
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_len(data: &[f64], shape: &[usize]) -> Result<()> {
    if data.len() != numel(shape) {
        return Err(AdError::ShapeMismatch(format!(
            "{} values for shape {shape:?}",
            data.len()
        )));
    }
    Ok(())
}

impl Tensor {
    /// Untracked constant.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self> {
        check_len(&data, shape)?;
        Ok(Self {
            data: Rc::new(data),
            shape: shape.to_vec(),
            node: None,
        })
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            data: Rc::new(vec![v]),
            shape: Vec::new(),
            node: None,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            data: Rc::new(vec![0.0; numel(shape)]),
            shape: shape.to_vec(),
            node: None,
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        Self {
            data: Rc::new(vec![v; numel(shape)]),
            shape: shape.to_vec(),
            node: None,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_rc(&self) -> Rc<Vec<f64>> {
        self.data.clone()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.numel() != 1 {
            return Err(AdError::ShapeMismatch(format!("item() on shape {:?}", self.shape)));
        }
        Ok(self.data[0])
    }

    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    /// Same values, cut from the tape.
    pub fn detach(&self) -> Tensor {
        Tensor {
            data: self.data.clone(),
            shape: self.shape.clone(),
            node: None,
        }
    }

    pub(crate) fn with_shape(&self, shape: Vec<usize>) -> Tensor {
        Tensor {
            data: self.data.clone(),
            shape,
            node: self.node.clone(),
        }
    }

    /// Records a custom operation. `backward` maps the output gradient to
    /// one gradient per input, in input order.
    pub fn from_op<F>(inputs: &[&Tensor], data: Vec<f64>, shape: Vec<usize>, backward: F) -> Result<Tensor>
    where
        F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    {
        Self::from_op_rc(inputs, Rc::new(data), shape, backward)
    }

    /// [`Tensor::from_op`] for outputs the backward rule also captures.
    pub(crate) fn from_op_rc<F>(inputs: &[&Tensor], data: Rc<Vec<f64>>, shape: Vec<usize>, backward: F) -> Result<Tensor>
    where
        F: Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + 'static,
    {
        check_len(&data, &shape)?;
        let mut tape: Option<&Tape> = None;
        for t in inputs {
            if let Some((tp, _)) = &t.node {
                match tape {
                    None => tape = Some(tp),
                    Some(x) if !x.same(tp) => return Err(AdError::MixedTapes),
                    _ => {}
                }
            }
        }
        let Some(tape) = tape else {
            return Ok(Tensor {
                data,
                shape,
                node: None,
            });
        };
        // recording on a consumed tape is allowed; its backward will fail
        let mut inner = tape.0.borrow_mut();
        let id = inner.nodes.len();
        inner.nodes.push(Node {
            parents: inputs.iter().map(|t| t.node.as_ref().map(|(_, i)| *i)).collect(),
            backward: Some(Box::new(backward)),
            len: data.len(),
        });
        drop(inner);
        Ok(Tensor {
            data,
            shape,
            node: Some((tape.clone(), id)),
        })
    }

    /// Reverse pass from a scalar loss. Consumes the tape.
    pub fn backward(&self) -> Result<Gradients> {
        if self.numel() != 1 {
            return Err(AdError::NonScalarLoss(self.shape.clone()));
        }
        let Some((tape, root)) = &self.node else {
            return Ok(Gradients {
                tape: None,
                grads: Vec::new(),
            });
        };
        let mut inner = tape.0.borrow_mut();
        if inner.consumed {
            return Err(AdError::StaleTape);
        }
        inner.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root + 1];
        grads[*root] = Some(vec![1.0]);
        for id in (0..=*root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &inner.nodes[id];
            if let Some(bw) = &node.backward {
                let needs: Vec<bool> = node.parents.iter().map(Option::is_some).collect();
                if needs.iter().any(|&b| b) {
                    let out = bw(&g, &needs);
                    debug_assert_eq!(out.len(), node.parents.len());
                    for (p, gi) in node.parents.iter().zip(out) {
                        let (Some(p), Some(gi)) = (p, gi) else { continue };
                        debug_assert_eq!(gi.len(), inner.nodes[*p].len);
                        match &mut grads[*p] {
                            Some(acc) => acc.iter_mut().zip(&gi).for_each(|(a, b)| *a += b),
                            slot @ None => *slot = Some(gi),
                        }
                    }
                }
            }
            grads[id] = Some(g);
        }
        // keep only leaf gradients, then release the recorded closures
        for (id, g) in grads.iter_mut().enumerate() {
            if inner.nodes[id].backward.is_some() {
                *g = None;
            }
        }
        for node in inner.nodes.iter_mut() {
            node.backward = None;
            node.parents = Vec::new();
        }
        Ok(Gradients {
            tape: Some(tape.clone()),
            grads,
        })
    }
}

/// Leaf gradients produced by [`Tensor::backward`].
pub struct Gradients {
    tape: Option<Tape>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of a leaf, `None` when it did not influence the loss.
    pub fn get(&self, t: &Tensor) -> Option<&[f64]> {
        let (tape, id) = t.node.as_ref()?;
        if !self.tape.as_ref().is_some_and(|x| x.same(tape)) {
            return None;
        }
        self.grads.get(*id)?.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let tape = Tape::new();
        let w = tape.leaf(vec![1.0, -2.0, 3.0], &[3]).unwrap();
        let loss = w.mul(&w).unwrap().sum();
        let g = loss.backward().unwrap();
        assert_eq!(g.get(&w).unwrap(), &[2.0, -4.0, 6.0]);
    }

    #[test]
    fn non_scalar_and_stale() {
        let tape = Tape::new();
        let w = tape.leaf(vec![1.0, 2.0], &[2]).unwrap();
        assert!(matches!(w.backward(), Err(AdError::NonScalarLoss(_))));
        let loss = w.sum();
        loss.backward().unwrap();
        assert_eq!(loss.backward().err(), Some(AdError::StaleTape));
        assert_eq!(w.relu().sum().backward().err(), Some(AdError::StaleTape));
    }

    #[test]
    fn detached_gets_no_gradient() {
        let tape = Tape::new();
        let w = tape.leaf(vec![1.0, 2.0], &[2]).unwrap();
        let d = w.detach();
        let loss = w.add(&d.mul(&d).unwrap()).unwrap().sum();
        let g = loss.backward().unwrap();
        assert_eq!(g.get(&w).unwrap(), &[1.0, 1.0]);
        assert!(g.get(&d).is_none());
    }

    #[test]
    fn mixed_tapes_rejected() {
        let a = Tape::new().leaf(vec![1.0], &[1]).unwrap();
        let b = Tape::new().leaf(vec![1.0], &[1]).unwrap();
        assert_eq!(a.add(&b).err(), Some(AdError::MixedTapes));
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(vec![3.0], &[]).unwrap();
        let y = x.mul(&x).unwrap();
        let loss = y.add(&y).unwrap().add(&x).unwrap();
        let g = loss.backward().unwrap();
        assert_eq!(g.get(&x).unwrap(), &[13.0]);
    }

    #[test]
    fn constants_are_not_recorded() {
        let tape = Tape::new();
        let _w = tape.leaf(vec![1.0], &[1]).unwrap();
        let c = Tensor::new(vec![2.0], &[1]).unwrap();
        let _ = c.mul(&c).unwrap().exp();
        assert_eq!(tape.len(), 1);
    }
}

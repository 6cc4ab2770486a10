use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use ndarray::{ArrayD, IxDyn};

use crate::{Float, ParamStore};

/// Maps the output gradient to one optional gradient per input.
pub(crate) type BackwardFn<T> = Box<dyn Fn(&ArrayD<T>) -> Vec<Option<ArrayD<T>>>>;

struct Node<T> {
    inputs: Vec<usize>,
    backward: Option<BackwardFn<T>>,
}

struct Bound<T> {
    id: usize,
    value: Rc<ArrayD<T>>,
    requires_grad: bool,
}

struct Inner<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<String, Bound<T>>,
    grad_enabled: bool,
}

/// One forward pass worth of recorded operations.
pub struct Graph<T: Float> {
    inner: Rc<RefCell<Inner<T>>>,
}

impl<T: Float> Clone for Graph<T> {
    fn clone(&self) -> Self {
        Self {
            inner: Rc::clone(&self.inner),
        }
    }
}

impl<T: Float> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// A value on the tape.
#[derive(Clone)]
pub struct Var<T: Float> {
    pub(crate) id: usize,
    pub(crate) value: Rc<ArrayD<T>>,
    pub(crate) requires_grad: bool,
    pub(crate) graph: Graph<T>,
}

impl<T: Float> std::fmt::Debug for Var<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value.shape())
            .field("requires_grad", &self.requires_grad)
            .finish()
    }
}

impl<T: Float> Graph<T> {
    pub fn new() -> Self {
        Self::with_grad(true)
    }

    /// A graph that records no backward closures; for inference.
    pub fn no_grad() -> Self {
        Self::with_grad(false)
    }

    fn with_grad(grad_enabled: bool) -> Self {
        Self {
            inner: Rc::new(RefCell::new(Inner {
                nodes: Vec::new(),
                params: HashMap::new(),
                grad_enabled,
            })),
        }
    }

    pub fn grad_enabled(&self) -> bool {
        self.inner.borrow().grad_enabled
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn same_graph(&self, other: &Graph<T>) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&self, value: ArrayD<T>) -> Var<T> {
        self.leaf_rc(Rc::new(standard(value)), false)
    }

    /// A leaf that receives gradient when the graph records them.
    pub fn input(&self, value: ArrayD<T>) -> Var<T> {
        let rg = self.grad_enabled();
        self.leaf_rc(Rc::new(standard(value)), rg)
    }

    pub fn scalar(&self, v: T) -> Var<T> {
        self.constant(ArrayD::from_elem(IxDyn(&[]), v))
    }

    fn leaf_rc(&self, value: Rc<ArrayD<T>>, requires_grad: bool) -> Var<T> {
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.nodes.push(Node {
                inputs: Vec::new(),
                backward: None,
            });
            inner.nodes.len() - 1
        };
        Var {
            id,
            value,
            requires_grad,
            graph: self.clone(),
        }
    }

    /// Binds `name` from `store`; repeated calls return the same leaf.
    ///
    /// Panics if the name is missing, which is a wiring bug rather than a
    /// runtime condition.
    pub fn param(&self, store: &ParamStore<T>, name: &str) -> Var<T> {
        if let Some(b) = self.inner.borrow().params.get(name) {
            return Var {
                id: b.id,
                value: Rc::clone(&b.value),
                requires_grad: b.requires_grad,
                graph: self.clone(),
            };
        }
        let p = store
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} is not in the store"));
        let requires_grad = p.trainable && self.grad_enabled();
        let var = self.leaf_rc(Rc::new(standard(p.value.clone())), requires_grad);
        self.inner.borrow_mut().params.insert(
            name.to_string(),
            Bound {
                id: var.id,
                value: Rc::clone(&var.value),
                requires_grad,
            },
        );
        var
    }

    /// Records an op. `backward` receives the output gradient plus a flag per
    /// input saying whether that input needs a gradient, and returns one
    /// entry per input (`None` where not needed).
    pub(crate) fn push<F>(&self, value: ArrayD<T>, inputs: &[&Var<T>], backward: F) -> Var<T>
    where
        F: Fn(&ArrayD<T>, &[bool]) -> Vec<Option<ArrayD<T>>> + 'static,
    {
        self.push_rc(Rc::new(standard(value)), inputs, backward)
    }

    /// As [`Graph::push`] for a value the closure also holds; must already
    /// be in standard layout.
    pub(crate) fn push_rc<F>(&self, value: Rc<ArrayD<T>>, inputs: &[&Var<T>], backward: F) -> Var<T>
    where
        F: Fn(&ArrayD<T>, &[bool]) -> Vec<Option<ArrayD<T>>> + 'static,
    {
        debug_assert!(value.is_standard_layout());
        for v in inputs {
            debug_assert!(self.same_graph(&v.graph), "vars from different graphs");
        }
        let needs: Vec<bool> = inputs.iter().map(|v| v.requires_grad).collect();
        let requires_grad = self.grad_enabled() && needs.iter().any(|&b| b);
        let node = if requires_grad {
            Node {
                inputs: inputs.iter().map(|v| v.id).collect(),
                backward: Some(Box::new(move |g: &ArrayD<T>| backward(g, &needs)) as BackwardFn<T>),
            }
        } else {
            Node {
                inputs: Vec::new(),
                backward: None,
            }
        };
        let id = {
            let mut inner = self.inner.borrow_mut();
            inner.nodes.push(node);
            inner.nodes.len() - 1
        };
        Var {
            id,
            value,
            requires_grad,
            graph: self.clone(),
        }
    }

    /// Gradients of the scalar `loss` with respect to every leaf that
    /// requires one.
    pub fn backward(&self, loss: &Var<T>) -> Gradients<T> {
        assert_eq!(loss.value.len(), 1, "backward needs a scalar, got shape {:?}", loss.value.shape());
        let inner = self.inner.borrow();
        let mut grads: Vec<Option<ArrayD<T>>> = (0..=loss.id).map(|_| None).collect();
        let mut leaves = HashMap::new();
        if loss.requires_grad {
            grads[loss.id] = Some(ArrayD::from_elem(loss.value.raw_dim(), T::one()));
        }
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &inner.nodes[id];
            match &node.backward {
                None => {
                    leaves.insert(id, g);
                }
                Some(f) => {
                    let ins = f(&g);
                    debug_assert_eq!(ins.len(), node.inputs.len());
                    for (&input, gi) in node.inputs.iter().zip(ins) {
                        let Some(gi) = gi else { continue };
                        match &mut grads[input] {
                            Some(acc) => *acc += &gi,
                            slot => *slot = Some(gi),
                        }
                    }
                }
            }
        }
        let names = inner
            .params
            .iter()
            .filter(|(_, b)| b.requires_grad)
            .map(|(n, b)| (n.clone(), b.id))
            .collect();
        Gradients { leaves, names }
    }
}

/// Leaf gradients from one backward pass.
pub struct Gradients<T> {
    leaves: HashMap<usize, ArrayD<T>>,
    names: BTreeMap<String, usize>,
}

impl<T: Float> Gradients<T> {
    pub fn get(&self, var: &Var<T>) -> Option<&ArrayD<T>> {
        self.leaves.get(&var.id)
    }

    /// Gradient of a bound parameter; `None` if the parameter is frozen or
    /// did not influence the loss.
    pub fn param(&self, name: &str) -> Option<&ArrayD<T>> {
        self.names.get(name).and_then(|id| self.leaves.get(id))
    }

    /// Trainable parameters bound in the graph, whether or not they reached
    /// the loss.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.names.keys().map(String::as_str)
    }
}

pub(crate) fn standard<T: Float>(a: ArrayD<T>) -> ArrayD<T> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

impl<T: Float> Var<T> {
    pub fn value(&self) -> &ArrayD<T> {
        &self.value
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    pub fn ndim(&self) -> usize {
        self.value.ndim()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn graph(&self) -> &Graph<T> {
        &self.graph
    }

    /// Tape id; two vars with the same id are the same node.
    pub fn id(&self) -> usize {
        self.id
    }

    /// The single element of a scalar var.
    pub fn item(&self) -> T {
        assert_eq!(self.value.len(), 1, "item() on shape {:?}", self.value.shape());
        *self.value.iter().next().expect("one element")
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var<T> {
        self.graph.leaf_rc(Rc::clone(&self.value), false)
    }
}

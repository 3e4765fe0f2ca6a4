use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::fmt;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensors::Tensor;

type BackwardFn = Box<dyn Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>>>;

thread_local! {
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn next_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

struct Node {
    id: u64,
    op: &'static str,
    value: Tensor,
    requires_grad: bool,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
    grad: RefCell<Option<Tensor>>,
}

/// Handle to a value on the gradient tape.
///
/// Ids increase monotonically per thread, so a node is always created after
/// its parents and descending id order is a valid reverse topological order.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("op", &self.0.op)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    /// Trainable leaf.
    pub fn leaf(value: Tensor) -> Self {
        Self::make("leaf", value, true, Vec::new(), None)
    }

    pub fn constant(value: Tensor) -> Self {
        Self::make("const", value, false, Vec::new(), None)
    }

    pub fn scalar(v: f64) -> Self {
        Self::constant(Tensor::scalar(v))
    }

    fn make(
        op: &'static str,
        value: Tensor,
        requires_grad: bool,
        parents: Vec<Var>,
        backward: Option<BackwardFn>,
    ) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            op,
            value,
            requires_grad,
            parents,
            backward,
            grad: RefCell::new(None),
        }))
    }

    /// Records an op. The backward closure receives the output gradient and a
    /// mask of which parents need a gradient, and returns one entry per parent.
    pub fn record(
        op: &'static str,
        value: Tensor,
        parents: Vec<Var>,
        backward: impl Fn(&Tensor, &[bool]) -> Vec<Option<Tensor>> + 'static,
    ) -> Self {
        if parents.iter().any(Var::requires_grad) {
            Self::make(op, value, true, parents, Some(Box::new(backward)))
        } else {
            Self::make(op, value, false, Vec::new(), None)
        }
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn op(&self) -> &'static str {
        self.0.op
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.backward.is_none()
    }

    pub fn grad(&self) -> Option<Tensor> {
        self.0.grad.borrow().clone()
    }

    pub fn take_grad(&self) -> Option<Tensor> {
        self.0.grad.borrow_mut().take()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.borrow_mut() = None;
    }

    /// Same value, cut from the tape.
    pub fn detach(&self) -> Var {
        Var::constant(self.0.value.clone())
    }

    fn accumulate(&self, g: Tensor) {
        let mut slot = self.0.grad.borrow_mut();
        match slot.as_mut() {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        }
    }

    /// Reverse-mode sweep from a scalar. Leaf gradients accumulate; gradients
    /// of interior nodes are consumed.
    pub fn backward(&self) -> Result<()> {
        if !self.0.value.is_scalar() {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let mut order = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(v) = stack.pop() {
            if !seen.insert(v.0.id) {
                continue;
            }
            for p in &v.0.parents {
                if p.requires_grad() && !seen.contains(&p.0.id) {
                    stack.push(p.clone());
                }
            }
            order.push(v);
        }
        order.sort_unstable_by(|a, b| b.0.id.cmp(&a.0.id));

        self.accumulate(Tensor::scalar(1.0));
        for node in &order {
            let Some(back) = node.0.backward.as_ref() else { continue };
            let Some(g) = node.take_grad() else { continue };
            let mask: Vec<bool> = node.0.parents.iter().map(Var::requires_grad).collect();
            let grads = back(&g, &mask);
            debug_assert_eq!(grads.len(), node.0.parents.len(), "op {}", node.0.op);
            for ((p, gp), need) in node.0.parents.iter().zip(grads).zip(mask) {
                if let (true, Some(gp)) = (need, gp) {
                    debug_assert_eq!(gp.len(), p.value().len(), "grad shape from op {}", node.0.op);
                    p.accumulate(gp);
                }
            }
        }
        Ok(())
    }
}

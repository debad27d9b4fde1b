//! Minimal scalar reverse-mode differentiation.
//!
//! A [`Tape`] is a Wengert list: every operation on a [`Var`] appends one
//! node holding the indices of its (at most two) parents and the local
//! partial derivatives, computed eagerly during the forward pass. The
//! backward sweep is then a single reverse loop that needs no knowledge of
//! which operation produced a node.
//!
//! Reverse mode costs one forward pass plus one sweep regardless of the
//! number of parameters, which is what makes exact whole-model gradients
//! cheap enough to verify against finite differences on every test run.

use std::cell::{Cell, RefCell};

use crate::scalar::{sigmoid_stable, Real};

#[derive(Clone, Copy)]
struct Node {
    parent0: u32,
    parent1: u32,
    partial0: f64,
    partial1: f64,
}

/// Records operations for one gradient evaluation. Create variables with
/// [`Tape::leaf`], compute, then call [`Tape::gradients`] on the output.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    /// Smallest |input| seen by any `relu` on this tape; +inf if none.
    /// Used to screen finite-difference checks away from the kink.
    relu_margin: Cell<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            relu_margin: Cell::new(f64::INFINITY),
        }
    }

    pub fn with_capacity(n: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::with_capacity(n)),
            relu_margin: Cell::new(f64::INFINITY),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drop all nodes, keeping allocated capacity for reuse.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
        self.relu_margin.set(f64::INFINITY);
    }

    /// Distance of the closest `relu` evaluation to its kink at zero.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin.get()
    }

    /// New independent variable.
    pub fn leaf(&self, value: f64) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node {
            parent0: idx,
            parent1: idx,
            partial0: 0.0,
            partial1: 0.0,
        });
        Var {
            tape: self,
            idx,
            val: value,
        }
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(node);
        idx
    }

    /// Reverse sweep from `output`; returns the adjoint of every node.
    pub fn gradients(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut adjoint = vec![0.0f64; nodes.len()];
        adjoint[output.idx as usize] = 1.0;
        for i in (0..=output.idx as usize).rev() {
            let g = adjoint[i];
            if g == 0.0 {
                continue;
            }
            let n = nodes[i];
            adjoint[n.parent0 as usize] += n.partial0 * g;
            adjoint[n.parent1 as usize] += n.partial1 * g;
        }
        Gradients { adjoint }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

/// Adjoints produced by [`Tape::gradients`].
pub struct Gradients {
    adjoint: Vec<f64>,
}

impl Gradients {
    /// Gradient of the swept output with respect to `v`.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoint[v.idx as usize]
    }
}

/// A value recorded on a tape. Copyable; arithmetic appends nodes.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    pub fn val(self) -> f64 {
        self.val
    }

    fn unary(self, val: f64, partial: f64) -> Var<'t> {
        let idx = self.tape.push(Node {
            parent0: self.idx,
            parent1: self.idx,
            partial0: partial,
            partial1: 0.0,
        });
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }

    fn binary(self, rhs: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        debug_assert!(std::ptr::eq(self.tape, rhs.tape), "vars from different tapes");
        let idx = self.tape.push(Node {
            parent0: self.idx,
            parent1: rhs.idx,
            partial0: da,
            partial1: db,
        });
        Var {
            tape: self.tape,
            idx,
            val,
        }
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        // primal uses true division so values stay bit-identical to the
        // plain f64 evaluation
        let val = self.val / rhs.val;
        let inv = 1.0 / rhs.val;
        self.binary(rhs, val, inv, -val * inv)
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        self.unary(self.val + c, 1.0)
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        self.unary(self.val - c, 1.0)
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        self.unary(self.val * c, c)
    }
}

impl<'t> std::ops::Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        self.unary(self.val / c, 1.0 / c)
    }
}

impl<'t> Real for Var<'t> {
    fn value(self) -> f64 {
        self.val
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn relu(self) -> Self {
        let m = self.tape.relu_margin.get();
        if self.val.abs() < m {
            self.tape.relu_margin.set(self.val.abs());
        }
        if self.val > 0.0 {
            self.unary(self.val, 1.0)
        } else {
            self.unary(0.0, 0.0)
        }
    }

    fn sigmoid(self) -> Self {
        let s = sigmoid_stable(self.val);
        self.unary(s, s * (1.0 - s))
    }

    fn clamp_max(self, cap: f64) -> Self {
        if self.val > cap {
            self.unary(cap, 0.0)
        } else {
            self.unary(self.val, 1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grad1(f: impl for<'t> Fn(Var<'t>) -> Var<'t>, x: f64) -> (f64, f64) {
        let tape = Tape::new();
        let v = tape.leaf(x);
        let y = f(v);
        let g = tape.gradients(y);
        (y.val(), g.wrt(v))
    }

    #[test]
    fn polynomial_gradient() {
        // f(x) = x^2 + 3x, f'(2) = 7
        let (y, g) = grad1(|x| x * x + x * 3.0, 2.0);
        assert_eq!(y, 10.0);
        assert_eq!(g, 7.0);
    }

    #[test]
    fn division_gradient() {
        // f(x, y) = x / y at (6, 3): df/dx = 1/3, df/dy = -2/3
        let tape = Tape::new();
        let x = tape.leaf(6.0);
        let y = tape.leaf(3.0);
        let z = x / y;
        let g = tape.gradients(z);
        assert!((g.wrt(x) - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.wrt(y) + 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exp_ln_chain() {
        // f(x) = ln(exp(x) + 1), f'(x) = sigmoid(x)
        let (_, g) = grad1(|x| (x.exp() + 1.0).ln(), 0.7);
        assert!((g - sigmoid_stable(0.7)).abs() < 1e-12);
    }

    #[test]
    fn sqrt_gradient() {
        let (y, g) = grad1(|x| x.sqrt(), 9.0);
        assert_eq!(y, 3.0);
        assert!((g - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn relu_sides_and_margin() {
        let tape = Tape::new();
        let a = tape.leaf(2.0);
        let b = tape.leaf(-0.5);
        let sum = a.relu() + b.relu();
        let g = tape.gradients(sum);
        assert_eq!(g.wrt(a), 1.0);
        assert_eq!(g.wrt(b), 0.0);
        assert_eq!(tape.relu_margin(), 0.5);
    }

    #[test]
    fn sigmoid_gradient_matches_closed_form() {
        let (y, g) = grad1(|x| x.sigmoid(), 0.3);
        let s = sigmoid_stable(0.3);
        assert_eq!(y, s);
        assert!((g - s * (1.0 - s)).abs() < 1e-15);
    }

    #[test]
    fn fan_out_accumulates() {
        // f(x) = x * x + x: both uses of x must contribute.
        let (_, g) = grad1(|x| x * x + x, 4.0);
        assert_eq!(g, 9.0);
    }

    #[test]
    fn clamp_max_kills_gradient_past_cap() {
        let (y, g) = grad1(|x| x.clamp_max(1.0), 5.0);
        assert_eq!(y, 1.0);
        assert_eq!(g, 0.0);
        let (y, g) = grad1(|x| x.clamp_max(10.0), 5.0);
        assert_eq!(y, 5.0);
        assert_eq!(g, 1.0);
    }

    #[test]
    fn clear_reuses_tape() {
        let tape = Tape::new();
        let x = tape.leaf(1.0);
        let _ = x + x;
        assert_eq!(tape.len(), 2);
        tape.clear();
        assert!(tape.is_empty());
        assert_eq!(tape.relu_margin(), f64::INFINITY);
    }
}

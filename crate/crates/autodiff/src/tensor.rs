use std::cell::{Ref, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::rng;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// Dense n-dimensional array of f64 in row-major order, with an optional
/// gradient buffer. Cloning a `Tensor` clones the handle, not the storage;
/// an op's output is never mutated after creation, while leaf parameters are
/// updated in place between steps via [`Tensor::set_data`].
///
/// Handles are deliberately `!Send`: a tensor and the tape that produced it
/// stay confined to one execution context.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<Inner>,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: RefCell<Vec<f64>>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
}

/// Checked product of extents; empty shape denotes a scalar (length 1).
pub fn element_count(shape: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &e in shape {
        n = n
            .checked_mul(e)
            .ok_or_else(|| TensorError::SizeOverflow { shape: shape.to_vec() })?;
    }
    // Guard against byte-size overflow of the backing allocation as well.
    n.checked_mul(std::mem::size_of::<f64>())
        .ok_or_else(|| TensorError::SizeOverflow { shape: shape.to_vec() })?;
    Ok(n)
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = element_count(shape)?;
        if n != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "from_vec",
                detail: format!("shape {shape:?} holds {n} elements, data has {}", data.len()),
            });
        }
        Ok(Tensor {
            inner: Rc::new(Inner {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape: shape.to_vec(),
                data: RefCell::new(data),
                requires_grad: false,
                grad: RefCell::new(None),
            }),
        })
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        let n = element_count(shape)?;
        Tensor::from_vec(shape, vec![value; n])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Tensor::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_vec(&[], vec![value]).expect("scalar construction cannot fail")
    }

    /// Normally distributed values with the given stddev, drawn from `rng`.
    /// Identical rng state yields bitwise-identical tensors.
    pub fn randn(shape: &[usize], stddev: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let n = element_count(shape)?;
        let data = (0..n).map(|_| rng::normal(rng) * stddev).collect();
        Tensor::from_vec(shape, data)
    }

    /// Uniform values in `[-bound, bound)`.
    pub fn rand_uniform(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let n = element_count(shape)?;
        let data = (0..n).map(|_| rng::uniform(rng, -bound, bound)).collect();
        Tensor::from_vec(shape, data)
    }

    /// Mark this tensor as a trainable leaf. Consumes and rewraps the handle;
    /// only meaningful before the tensor is used in any op.
    pub fn requiring_grad(self) -> Self {
        let inner = Rc::try_unwrap(self.inner).unwrap_or_else(|rc| Inner {
            id: rc.id,
            shape: rc.shape.clone(),
            data: RefCell::new(rc.data.borrow().clone()),
            requires_grad: rc.requires_grad,
            grad: RefCell::new(rc.grad.borrow().clone()),
        });
        Tensor {
            inner: Rc::new(Inner {
                requires_grad: true,
                ..inner
            }),
        }
    }

    pub fn id(&self) -> u64 {
        self.inner.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.inner.shape
    }

    pub fn rank(&self) -> usize {
        self.inner.shape.len()
    }

    pub fn len(&self) -> usize {
        self.inner.data.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.inner.shape.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.requires_grad
    }

    pub fn data(&self) -> Ref<'_, Vec<f64>> {
        self.inner.data.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.inner.data.borrow().clone()
    }

    pub fn item(&self) -> f64 {
        self.inner.data.borrow()[0]
    }

    /// Overwrite the storage in place. Used by optimizers, checkpoint loading
    /// and finite-difference probes; never call on an op output.
    pub fn set_data(&self, data: &[f64]) {
        let mut d = self.inner.data.borrow_mut();
        assert_eq!(d.len(), data.len(), "set_data length mismatch");
        d.copy_from_slice(data);
    }

    /// Mutate the storage through a closure. Same caveats as [`set_data`].
    pub fn update_data(&self, f: impl FnOnce(&mut [f64])) {
        f(&mut self.inner.data.borrow_mut());
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.grad.borrow().clone()
    }

    pub fn zero_grad(&self) {
        *self.inner.grad.borrow_mut() = None;
    }

    /// Additively accumulate `delta` into the gradient buffer.
    pub fn accumulate_grad(&self, delta: &[f64]) {
        assert_eq!(delta.len(), self.len(), "gradient length mismatch");
        let mut g = self.inner.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => {
                for (dst, src) in buf.iter_mut().zip(delta) {
                    *dst += src;
                }
            }
            None => *g = Some(delta.to_vec()),
        }
    }

    /// Pointer identity: do two handles share storage?
    pub fn same_storage(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.inner, &other.inner)
    }
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("id", &self.inner.id)
            .field("shape", &self.inner.shape)
            .field("requires_grad", &self.inner.requires_grad)
            .finish()
    }
}

/// Reject NaN/Inf in freshly computed op outputs; overflow must surface as an
/// error, never as a silent value.
pub(crate) fn ensure_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

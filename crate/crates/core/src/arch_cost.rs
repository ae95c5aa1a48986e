//! Closed-form FLOP and memory-access counts for transformer inference.
//!
//! FLOPs count one multiply-accumulate as two operations. Memory counts are
//! tensor *elements* read or written; no dtype width is applied, since a
//! constant byte factor is absorbed by the fitted energy coefficients.
//! Scaling, softmax, layer norm, dropout and bias terms are not counted.
//!
//! All counts are `u128` computed with checked arithmetic so that large
//! architectures at long context fail loudly instead of wrapping.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CostError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),
}

/// Transformer shape that drives the cost formulas.
///
/// `name`, `params_b` and `attention` are informational. The attention variant
/// (MHA, GQA grouping) does not change the closed forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArch")]
pub struct ModelArch {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub params_b: Option<f64>,
    pub hidden_size: u64,
    pub num_layers: u64,
    pub num_heads: u64,
    #[serde(default)]
    pub attention: Option<String>,
}

#[derive(Deserialize)]
struct RawArch {
    #[serde(default)]
    name: String,
    #[serde(default)]
    params_b: Option<f64>,
    hidden_size: u64,
    num_layers: u64,
    num_heads: u64,
    #[serde(default)]
    attention: Option<String>,
}

impl TryFrom<RawArch> for ModelArch {
    type Error = CostError;

    fn try_from(raw: RawArch) -> Result<Self, Self::Error> {
        let mut arch = ModelArch::new(raw.hidden_size, raw.num_layers, raw.num_heads)?;
        arch.name = raw.name;
        arch.params_b = raw.params_b;
        arch.attention = raw.attention;
        Ok(arch)
    }
}

impl ModelArch {
    pub fn new(hidden_size: u64, num_layers: u64, num_heads: u64) -> Result<Self, CostError> {
        for (field, value) in [
            ("hidden_size", hidden_size),
            ("num_layers", num_layers),
            ("num_heads", num_heads),
        ] {
            if value == 0 {
                return Err(CostError::InvalidArch(format!("{field} must be >= 1")));
            }
        }
        Ok(ModelArch {
            name: String::new(),
            params_b: None,
            hidden_size,
            num_layers,
            num_heads,
            attention: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Non-fatal problems with the shape. Currently only head divisibility.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.hidden_size.is_multiple_of(self.num_heads) {
            out.push(format!(
                "hidden_size {} is not divisible by num_heads {}",
                self.hidden_size, self.num_heads
            ));
        }
        out
    }
}

/// Input and output token counts of one request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SequenceShape {
    pub n_in: u64,
    pub n_out: u64,
}

impl SequenceShape {
    pub fn new(n_in: u64, n_out: u64) -> Self {
        SequenceShape { n_in, n_out }
    }
}

/// Parses the bundled registry of reference architectures.
pub fn builtin_architectures() -> Vec<ModelArch> {
    serde_json::from_str(include_str!("../data/architectures.json"))
        .expect("bundled architecture registry is valid")
}

pub fn find_builtin(name: &str) -> Option<ModelArch> {
    let needle = name.to_ascii_lowercase();
    builtin_architectures()
        .into_iter()
        .find(|a| a.name.to_ascii_lowercase() == needle)
}

// Small checked-arithmetic helper so the formulas read close to their algebra.
#[derive(Clone, Copy)]
struct C(u128, &'static str);

impl C {
    fn of(v: u64, op: &'static str) -> Self {
        C(v as u128, op)
    }
    fn k(self, v: u128) -> Self {
        C(v, self.1)
    }
    fn mul(self, o: C) -> Result<C, CostError> {
        self.0
            .checked_mul(o.0)
            .map(|v| C(v, self.1))
            .ok_or(CostError::Overflow(self.1))
    }
    fn add(self, o: C) -> Result<C, CostError> {
        self.0
            .checked_add(o.0)
            .map(|v| C(v, self.1))
            .ok_or(CostError::Overflow(self.1))
    }
}

struct Dims {
    d: C,
    l: C,
    nq: C,
}

fn dims(arch: &ModelArch, op: &'static str) -> Dims {
    Dims {
        d: C::of(arch.hidden_size, op),
        l: C::of(arch.num_layers, op),
        nq: C::of(arch.num_heads, op),
    }
}

/// n(n-1)/2, the sum of 0..n. Exact since n(n-1) is always even.
fn triangle(n: C) -> Result<C, CostError> {
    if n.0 == 0 {
        return Ok(n.k(0));
    }
    let prev = n.k(n.0 - 1);
    let prod = n.mul(prev)?;
    Ok(prod.k(prod.0 / 2))
}

/// `L * (24 n_in d^2 + 4 n_in^2 d)`
pub fn prefill_flops(arch: &ModelArch, n_in: u64) -> Result<u128, CostError> {
    let op = "prefill_flops";
    let Dims { d, l, .. } = dims(arch, op);
    let n = C::of(n_in, op);
    let d2 = d.mul(d)?;
    let linear = d.k(24).mul(n)?.mul(d2)?;
    let quad = d.k(4).mul(n)?.mul(n)?.mul(d)?;
    Ok(l.mul(linear.add(quad)?)?.0)
}

/// `L * (24 n_out d^2 + 4 d (n_out n_in + n_out (n_out - 1) / 2))`
pub fn decode_flops(arch: &ModelArch, n_in: u64, n_out: u64) -> Result<u128, CostError> {
    let op = "decode_flops";
    let Dims { d, l, .. } = dims(arch, op);
    let (ni, no) = (C::of(n_in, op), C::of(n_out, op));
    let d2 = d.mul(d)?;
    let weights = d.k(24).mul(no)?.mul(d2)?;
    let context = no.mul(ni)?.add(triangle(no)?)?;
    let attn = d.k(4).mul(d)?.mul(context)?;
    Ok(l.mul(weights.add(attn)?)?.0)
}

/// Factored total `2 L d (12 d n_in + 12 d n_out + 2 n_in^2 + 2 n_out n_in + n_out^2 - n_out)`.
///
/// Agrees exactly with `prefill_flops + decode_flops`.
pub fn total_flops(arch: &ModelArch, shape: SequenceShape) -> Result<u128, CostError> {
    let op = "total_flops";
    let Dims { d, l, .. } = dims(arch, op);
    let (ni, no) = (C::of(shape.n_in, op), C::of(shape.n_out, op));
    let twelve_d = d.k(12).mul(d)?;
    // n_out^2 - n_out never underflows for integers.
    let no_sq_minus = no.mul(no)?.0 - no.0;
    let inner = twelve_d
        .mul(ni)?
        .add(twelve_d.mul(no)?)?
        .add(d.k(2).mul(ni)?.mul(ni)?)?
        .add(d.k(2).mul(no)?.mul(ni)?)?
        .add(d.k(no_sq_minus))?;
    Ok(d.k(2).mul(l)?.mul(d)?.mul(inner)?.0)
}

/// `L * (10 n_in d + 10 d^2 + 2 n_in^2 n_q)`
pub fn prefill_mem_ops(arch: &ModelArch, n_in: u64) -> Result<u128, CostError> {
    let op = "prefill_mem_ops";
    let Dims { d, l, nq } = dims(arch, op);
    let n = C::of(n_in, op);
    let act = d.k(10).mul(n)?.mul(d)?;
    let weights = d.k(10).mul(d)?.mul(d)?;
    let scores = d.k(2).mul(n)?.mul(n)?.mul(nq)?;
    Ok(l.mul(act.add(weights)?.add(scores)?)?.0)
}

/// `L * (7 d n_out + 10 d^2 n_out + (n_q + d)(n_in n_out + n_out (n_out - 1) / 2))`
pub fn decode_mem_ops(arch: &ModelArch, n_in: u64, n_out: u64) -> Result<u128, CostError> {
    let op = "decode_mem_ops";
    let Dims { d, l, nq } = dims(arch, op);
    let (ni, no) = (C::of(n_in, op), C::of(n_out, op));
    Ok(l.mul(decode_mem_layer(d, nq, ni, no)?)?.0)
}

fn decode_mem_layer(d: C, nq: C, ni: C, no: C) -> Result<C, CostError> {
    let act = d.k(7).mul(d)?.mul(no)?;
    let weights = d.k(10).mul(d)?.mul(d)?.mul(no)?;
    let context = no.mul(ni)?.add(triangle(no)?)?;
    let kv = nq.add(d)?.mul(context)?;
    act.add(weights)?.add(kv)
}

/// Grouped total `L [10 n_in d + 10 d^2 + 2 n_in^2 n_q + n_out (7d + 10d^2 + (n_q + d)(n_in + (n_out - 1)/2))]`,
/// evaluated with the half-integer term folded into `n_out (n_out - 1) / 2`.
pub fn total_mem_ops(arch: &ModelArch, shape: SequenceShape) -> Result<u128, CostError> {
    let op = "total_mem_ops";
    let Dims { d, l, nq } = dims(arch, op);
    let (ni, no) = (C::of(shape.n_in, op), C::of(shape.n_out, op));
    let prefill = d
        .k(10)
        .mul(ni)?
        .mul(d)?
        .add(d.k(10).mul(d)?.mul(d)?)?
        .add(d.k(2).mul(ni)?.mul(ni)?.mul(nq)?)?;
    let per_layer = prefill.add(decode_mem_layer(d, nq, ni, no)?)?;
    Ok(l.mul(per_layer)?.0)
}

/// All six counts for one request shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CostBreakdown {
    pub prefill_flops: u128,
    pub decode_flops: u128,
    pub total_flops: u128,
    pub prefill_mem_ops: u128,
    pub decode_mem_ops: u128,
    pub total_mem_ops: u128,
}

pub fn breakdown(arch: &ModelArch, shape: SequenceShape) -> Result<CostBreakdown, CostError> {
    Ok(CostBreakdown {
        prefill_flops: prefill_flops(arch, shape.n_in)?,
        decode_flops: decode_flops(arch, shape.n_in, shape.n_out)?,
        total_flops: total_flops(arch, shape)?,
        prefill_mem_ops: prefill_mem_ops(arch, shape.n_in)?,
        decode_mem_ops: decode_mem_ops(arch, shape.n_in, shape.n_out)?,
        total_mem_ops: total_mem_ops(arch, shape)?,
    })
}

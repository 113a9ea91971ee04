//! Image-to-spike encoders.
//!
//! Five schemes are provided: Bernoulli rate coding, time-to-first-spike
//! (TTFS) latency coding, bit-plane coding, and two hybrids that append the
//! bit planes of an image after a rate or TTFS segment along the time axis.
//!
//! All encoders take unnormalized integer pixels plus the maximum
//! representable intensity and return spike trains of shape
//! `(T, N, C, H, W)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SeededRng;
use crate::tensor::{concat_axis0, elementwise, BinaryOp, DType, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncodeError {
    #[error("x_max must be >= 1, got {0}")]
    InvalidMaxValue(i64),
    #[error("pixel tensor must be int64 with shape (N, C, H, W), got {0}")]
    BadPixels(String),
    #[error("pixel value {value} outside [0, {x_max}]")]
    PixelOutOfRange { value: i64, x_max: i64 },
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = EncodeError> = std::result::Result<T, E>;

/// Batch of unnormalized integer images `(N, C, H, W)` with a known maximum
/// intensity.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pixels: Tensor,
    x_max: i64,
}

impl ImageBatch {
    pub fn new(pixels: Tensor, x_max: i64) -> Result<Self> {
        if x_max < 1 {
            return Err(EncodeError::InvalidMaxValue(x_max));
        }
        if pixels.rank() != 4 {
            return Err(EncodeError::BadPixels(format!("{pixels}")));
        }
        let values = pixels
            .as_int()
            .ok_or_else(|| EncodeError::BadPixels(format!("{pixels}")))?;
        if let Some(&value) = values.iter().find(|&&v| v < 0 || v > x_max) {
            return Err(EncodeError::PixelOutOfRange { value, x_max });
        }
        Ok(Self { pixels, x_max })
    }

    pub fn pixels(&self) -> &Tensor {
        &self.pixels
    }

    pub fn values(&self) -> &[i64] {
        self.pixels.as_int().expect("validated int64")
    }

    pub fn x_max(&self) -> i64 {
        self.x_max
    }

    pub fn shape(&self) -> &[usize] {
        self.pixels.shape()
    }

    pub fn len(&self) -> usize {
        self.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-sample shape `(C, H, W)`.
    pub fn sample_shape(&self) -> [usize; 3] {
        let s = self.shape();
        [s[1], s[2], s[3]]
    }

    /// New batch holding the listed samples, in order.
    pub fn select(&self, indices: &[usize]) -> ImageBatch {
        let [c, h, w] = self.sample_shape();
        let stride = c * h * w;
        let src = self.values();
        let mut data = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            data.extend_from_slice(&src[i * stride..(i + 1) * stride]);
        }
        let pixels = Tensor::from_int(&[indices.len(), c, h, w], data).expect("consistent shape");
        ImageBatch {
            pixels,
            x_max: self.x_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitOrder {
    Lsb,
    #[default]
    Msb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rounding {
    /// Round half away from zero.
    #[default]
    Nearest,
    Floor,
}

/// Which coding scheme produced a spike train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Rate,
    Ttfs,
    Bitplane,
    HybridRateBit,
    HybridTemporalBit,
}

impl Encoding {
    pub const ALL: [Encoding; 5] = [
        Encoding::Rate,
        Encoding::Ttfs,
        Encoding::Bitplane,
        Encoding::HybridRateBit,
        Encoding::HybridTemporalBit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Rate => "rate",
            Encoding::Ttfs => "ttfs",
            Encoding::Bitplane => "bitplane",
            Encoding::HybridRateBit => "hybrid_rate_bit",
            Encoding::HybridTemporalBit => "hybrid_temporal_bit",
        }
    }

    /// The single-scheme encoder a hybrid extends, if any.
    pub fn baseline(self) -> Option<Encoding> {
        match self {
            Encoding::HybridRateBit => Some(Encoding::Rate),
            Encoding::HybridTemporalBit => Some(Encoding::Ttfs),
            _ => None,
        }
    }

    pub fn uses_rng(self) -> bool {
        matches!(self, Encoding::Rate | Encoding::HybridRateBit)
    }

    /// Number of timesteps this scheme emits for images with maximum `x_max`.
    pub fn timesteps(self, cfg: &EncoderConfig, x_max: i64) -> Result<usize> {
        let bits = bit_count(x_max)? as usize;
        Ok(match self {
            Encoding::Rate => cfg.t_rate,
            Encoding::Ttfs => cfg.t_ttfs,
            Encoding::Bitplane => bits,
            Encoding::HybridRateBit => cfg.t_rate + bits,
            Encoding::HybridTemporalBit => cfg.t_ttfs + bits,
        })
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = EncodeError;

    fn from_str(s: &str) -> Result<Self> {
        Encoding::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| EncodeError::InvalidConfig(format!("unknown encoder `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// TTFS window length; the latest firing index is `t_ttfs - 1`.
    pub t_ttfs: usize,
    pub t_rate: usize,
    pub bit_order: BitOrder,
    pub rounding: Rounding,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            t_ttfs: 9,
            t_rate: 9,
            bit_order: BitOrder::Msb,
            rounding: Rounding::Nearest,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_ttfs < 2 {
            return Err(EncodeError::InvalidConfig(format!(
                "t_ttfs must be >= 2, got {}",
                self.t_ttfs
            )));
        }
        if self.t_rate < 1 {
            return Err(EncodeError::InvalidConfig("t_rate must be >= 1".into()));
        }
        Ok(())
    }
}

/// Binary planes of an image batch, `(n_bit, N, C, H, W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitPlaneStack {
    planes: Tensor,
    order: BitOrder,
}

impl BitPlaneStack {
    pub fn planes(&self) -> &Tensor {
        &self.planes
    }

    pub fn into_planes(self) -> Tensor {
        self.planes
    }

    pub fn n_bit(&self) -> usize {
        self.planes.shape()[0]
    }

    pub fn order(&self) -> BitOrder {
        self.order
    }

    /// Rebuilds pixel values as `Σ_k B_k 2^k`, reading planes in LSB order.
    pub fn reconstruct(&self) -> Result<Tensor> {
        let lsb = match self.order {
            BitOrder::Lsb => self.planes.clone(),
            BitOrder::Msb => self.planes.reverse_axis0()?,
        };
        let n_bit = self.n_bit();
        let shape = &self.planes.shape()[1..];
        let mut acc = Tensor::zeros(shape, DType::Int64);
        for (k, plane) in lsb.split_axis0(&vec![1; n_bit])?.into_iter().enumerate() {
            let plane = plane.reshape(shape)?;
            let weighted = elementwise(BinaryOp::Mul, &plane, 1i64 << k)?;
            acc = elementwise(BinaryOp::Add, &acc, &weighted)?;
        }
        Ok(acc)
    }
}

/// Spike tensor with a leading time axis, tagged with the scheme that made it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    spikes: Tensor,
    encoding: Encoding,
}

impl SpikeTrain {
    pub fn new(spikes: Tensor, encoding: Encoding) -> Result<Self> {
        if spikes.rank() < 2 || spikes.shape()[0] == 0 {
            return Err(EncodeError::InvalidConfig(format!(
                "spike train needs a nonempty time axis, got {spikes}"
            )));
        }
        Ok(Self { spikes, encoding })
    }

    pub fn spikes(&self) -> &Tensor {
        &self.spikes
    }

    pub fn into_spikes(self) -> Tensor {
        self.spikes
    }

    pub fn t_total(&self) -> usize {
        self.spikes.shape()[0]
    }

    pub fn encoding(&self) -> Encoding {
        self.encoding
    }
}

/// Bits needed to represent `x_max`: `⌊log2 x_max⌋ + 1`.
pub fn bit_count(x_max: i64) -> Result<u32> {
    if x_max < 1 {
        return Err(EncodeError::InvalidMaxValue(x_max));
    }
    Ok(64 - x_max.leading_zeros())
}

/// Extracts `bit_count(x_max)` binary planes by repeated mod-2 / floor-halving.
///
/// Each plane keeps the full `(N, C, H, W)` shape, so the channel axis stays
/// inside one plane rather than multiplying the plane count.
pub fn bitplane_encode(img: &ImageBatch, order: BitOrder) -> Result<BitPlaneStack> {
    let n_bit = bit_count(img.x_max())?;
    let mut rest = img.pixels().clone();
    let mut planes = Vec::with_capacity(n_bit as usize);
    for _ in 0..n_bit {
        let bit = elementwise(BinaryOp::Mod, &rest, 2i64)?.to_bits()?;
        let mut shape = vec![1];
        shape.extend_from_slice(bit.shape());
        planes.push(bit.reshape(&shape)?);
        rest = elementwise(BinaryOp::FloorDiv, &rest, 2i64)?;
    }
    if order == BitOrder::Msb {
        planes.reverse();
    }
    Ok(BitPlaneStack {
        planes: concat_axis0(&planes)?,
        order,
    })
}

/// Firing index for intensity `v`: `(T - 1)(1 - v / x_max)`, discretized.
///
/// Evaluated in exact integer arithmetic: with `num = (T - 1)(x_max - v)`,
/// floor is `num / x_max` and nearest (half away from zero) is
/// `(2 num + x_max) / (2 x_max)`.
pub fn ttfs_spike_index(v: i64, x_max: i64, t_ttfs: usize, rounding: Rounding) -> usize {
    let num = (t_ttfs as i64 - 1) * (x_max - v);
    let idx = match rounding {
        Rounding::Floor => num / x_max,
        Rounding::Nearest => (2 * num + x_max) / (2 * x_max),
    };
    idx as usize
}

fn bits_with_time(t: usize, img: &ImageBatch, data: Vec<u8>) -> Result<Tensor> {
    let mut shape = vec![t];
    shape.extend_from_slice(img.shape());
    Ok(Tensor::from_bits(&shape, data)?)
}

/// One spike per pixel, earlier for brighter pixels.
pub fn ttfs_encode(img: &ImageBatch, cfg: &EncoderConfig) -> Result<SpikeTrain> {
    cfg.validate()?;
    let t = cfg.t_ttfs;
    let values = img.values();
    let n = values.len();
    let mut data = vec![0u8; t * n];
    for (i, &v) in values.iter().enumerate() {
        let idx = ttfs_spike_index(v, img.x_max(), t, cfg.rounding);
        data[idx * n + i] = 1;
    }
    SpikeTrain::new(bits_with_time(t, img, data)?, Encoding::Ttfs)
}

/// Independent Bernoulli spikes per timestep with `p = v / x_max`.
///
/// Draws are consumed in row-major `(t, n, c, h, w)` order.
pub fn rate_encode(img: &ImageBatch, cfg: &EncoderConfig, rng: &mut SeededRng) -> Result<SpikeTrain> {
    if cfg.t_rate < 1 {
        return Err(EncodeError::InvalidConfig("t_rate must be >= 1".into()));
    }
    let t = cfg.t_rate;
    let x_max = img.x_max() as f64;
    let probs: Vec<f64> = img.values().iter().map(|&v| v as f64 / x_max).collect();
    let mut data = Vec::with_capacity(t * probs.len());
    for _ in 0..t {
        data.extend(probs.iter().map(|&p| u8::from(rng.bernoulli(p))));
    }
    SpikeTrain::new(bits_with_time(t, img, data)?, Encoding::Rate)
}

/// Bit planes alone, one plane per timestep.
pub fn bitplane_train(img: &ImageBatch, cfg: &EncoderConfig) -> Result<SpikeTrain> {
    let stack = bitplane_encode(img, cfg.bit_order)?;
    SpikeTrain::new(stack.into_planes(), Encoding::Bitplane)
}

/// TTFS segment of `t_ttfs` steps followed by the `n_bit` bit planes.
pub fn hybrid_temporal_bit_encode(img: &ImageBatch, cfg: &EncoderConfig) -> Result<SpikeTrain> {
    let ttfs = ttfs_encode(img, cfg)?;
    let planes = bitplane_encode(img, cfg.bit_order)?;
    let spikes = concat_axis0(&[ttfs.into_spikes(), planes.into_planes()])?;
    SpikeTrain::new(spikes, Encoding::HybridTemporalBit)
}

/// Rate segment of `t_rate` steps followed by the `n_bit` bit planes.
pub fn hybrid_rate_bit_encode(
    img: &ImageBatch,
    cfg: &EncoderConfig,
    rng: &mut SeededRng,
) -> Result<SpikeTrain> {
    let rate = rate_encode(img, cfg, rng)?;
    let planes = bitplane_encode(img, cfg.bit_order)?;
    let spikes = concat_axis0(&[rate.into_spikes(), planes.into_planes()])?;
    SpikeTrain::new(spikes, Encoding::HybridRateBit)
}

/// Dispatches to the encoder for `encoding`. `rng` is only consumed by the
/// rate-based schemes.
pub fn encode(
    encoding: Encoding,
    img: &ImageBatch,
    cfg: &EncoderConfig,
    rng: &mut SeededRng,
) -> Result<SpikeTrain> {
    match encoding {
        Encoding::Rate => rate_encode(img, cfg, rng),
        Encoding::Ttfs => ttfs_encode(img, cfg),
        Encoding::Bitplane => bitplane_train(img, cfg),
        Encoding::HybridRateBit => hybrid_rate_bit_encode(img, cfg, rng),
        Encoding::HybridTemporalBit => hybrid_temporal_bit_encode(img, cfg),
    }
}

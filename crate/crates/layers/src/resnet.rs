//! Residual backbones. Depth 18 stacks [2,2,2,2] basic blocks per stage,
//! depth 34 stacks [3,4,6,3]; every stage halves the sequence/spatial extent
//! through its first block, and the first block of a stage projects the
//! shortcut with a 1x1 conv when shape changes.

use avsr_autodiff::{PadMode, Result, Tape, Tensor};
use rand_chacha::ChaCha8Rng;

use crate::convbn::{ConvBn1d, ConvBn2d};
use crate::param::{join, NamedParam, ParamSet};

/// Backbone depth by basic-block counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depth {
    D18,
    D34,
}

impl Depth {
    pub fn block_counts(self) -> [usize; 4] {
        match self {
            Depth::D18 => [2, 2, 2, 2],
            Depth::D34 => [3, 4, 6, 3],
        }
    }

    pub fn as_u32(self) -> u32 {
        match self {
            Depth::D18 => 18,
            Depth::D34 => 34,
        }
    }

    pub fn from_u32(v: u32) -> Option<Self> {
        match v {
            18 => Some(Depth::D18),
            34 => Some(Depth::D34),
            _ => None,
        }
    }
}

pub struct BasicBlock2d {
    conv1: ConvBn2d,
    conv2: ConvBn2d,
    proj: Option<ConvBn2d>,
}

impl BasicBlock2d {
    pub fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let proj = if stride != 1 || cin != cout {
            Some(ConvBn2d::new(&[cout, cin, 1, 1], stride, 0, rng)?)
        } else {
            None
        };
        Ok(BasicBlock2d {
            conv1: ConvBn2d::new(&[cout, cin, 3, 3], stride, 1, rng)?,
            conv2: ConvBn2d::new(&[cout, cout, 3, 3], 1, 1, rng)?,
            proj,
        })
    }

    pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool) -> Result<Tensor> {
        let branch = self.conv1.forward(tape, x, training, true)?;
        let branch = self.conv2.forward(tape, &branch, training, false)?;
        let shortcut = match &self.proj {
            Some(p) => p.forward(tape, x, training, false)?,
            None => x.clone(),
        };
        let sum = tape.add(&branch, &shortcut)?;
        tape.relu(&sum)
    }
}

impl ParamSet for BasicBlock2d {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.conv1.collect_params(&join(prefix, "conv1"), out);
        self.conv2.collect_params(&join(prefix, "conv2"), out);
        if let Some(p) = &self.proj {
            p.collect_params(&join(prefix, "proj"), out);
        }
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.conv1.collect_buffers(&join(prefix, "conv1"), out);
        self.conv2.collect_buffers(&join(prefix, "conv2"), out);
        if let Some(p) = &self.proj {
            p.collect_buffers(&join(prefix, "proj"), out);
        }
    }
}

/// 2D residual backbone applied per frame. Stem keeps the extent; each of the
/// four stages halves it; global average pooling flattens to a feature vector
/// of width `widths[3]`.
pub struct ResNet2d {
    stem: ConvBn2d,
    stages: Vec<Vec<BasicBlock2d>>,
    pub depth: Depth,
    pub out_features: usize,
}

impl ResNet2d {
    pub fn new(cin: usize, widths: [usize; 4], depth: Depth, rng: &mut ChaCha8Rng) -> Result<Self> {
        let stem = ConvBn2d::new(&[widths[0], cin, 3, 3], 1, 1, rng)?;
        let mut stages = Vec::with_capacity(4);
        let mut prev = widths[0];
        for (stage, &blocks) in depth.block_counts().iter().enumerate() {
            let cout = widths[stage];
            let mut stage_blocks = Vec::with_capacity(blocks);
            for b in 0..blocks {
                let stride = if b == 0 { 2 } else { 1 };
                let block_cin = if b == 0 { prev } else { cout };
                stage_blocks.push(BasicBlock2d::new(block_cin, cout, stride, rng)?);
            }
            stages.push(stage_blocks);
            prev = cout;
        }
        Ok(ResNet2d { stem, stages, depth, out_features: widths[3] })
    }

    /// `[n, cin, h, w]` -> `[n, f]` via stem, stages and global average pool.
    pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool) -> Result<Tensor> {
        let mut h = self.stem.forward(tape, x, training, true)?;
        for stage in &self.stages {
            for block in stage {
                h = block.forward(tape, &h, training)?;
            }
        }
        let pooled = tape.mean_axis(&h, 3)?;
        tape.mean_axis(&pooled, 2)
    }

    /// Apply the backbone to every frame of a `[b, c, t, h, w]` sequence by
    /// folding time into the batch axis: -> `[b, t, f]`.
    pub fn forward_per_timestep(&self, tape: &Tape, x: &Tensor, training: bool) -> Result<Tensor> {
        let (batch, steps) = (x.shape()[0], x.shape()[2]);
        let folded = crate::temporal::fold_time(tape, x)?;
        let feats = self.forward(tape, &folded, training)?;
        crate::temporal::unfold_time(tape, &feats, batch, steps)
    }
}

impl ParamSet for ResNet2d {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.stem.collect_params(&join(prefix, "stem"), out);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.collect_params(&join(prefix, &format!("stage{s}.block{b}")), out);
            }
        }
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.stem.collect_buffers(&join(prefix, "stem"), out);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.collect_buffers(&join(prefix, &format!("stage{s}.block{b}")), out);
            }
        }
    }
}

pub struct BasicBlock1d {
    conv1: ConvBn1d,
    conv2: ConvBn1d,
    proj: Option<ConvBn1d>,
}

impl BasicBlock1d {
    pub fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let proj = if stride != 1 || cin != cout {
            Some(ConvBn1d::new(&[cout, cin, 1], stride, 0, rng)?)
        } else {
            None
        };
        Ok(BasicBlock1d {
            conv1: ConvBn1d::with_pad_mode(&[cout, cin, 3], stride, 1, PadMode::Replicate, rng)?,
            conv2: ConvBn1d::with_pad_mode(&[cout, cout, 3], 1, 1, PadMode::Replicate, rng)?,
            proj,
        })
    }

    pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool) -> Result<Tensor> {
        let branch = self.conv1.forward(tape, x, training, true)?;
        let branch = self.conv2.forward(tape, &branch, training, false)?;
        let shortcut = match &self.proj {
            Some(p) => p.forward(tape, x, training, false)?,
            None => x.clone(),
        };
        let sum = tape.add(&branch, &shortcut)?;
        tape.relu(&sum)
    }
}

impl ParamSet for BasicBlock1d {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.conv1.collect_params(&join(prefix, "conv1"), out);
        self.conv2.collect_params(&join(prefix, "conv2"), out);
        if let Some(p) = &self.proj {
            p.collect_params(&join(prefix, "proj"), out);
        }
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.conv1.collect_buffers(&join(prefix, "conv1"), out);
        self.conv2.collect_buffers(&join(prefix, "conv2"), out);
        if let Some(p) = &self.proj {
            p.collect_buffers(&join(prefix, "proj"), out);
        }
    }
}

/// Stem geometry for the raw-waveform backbone: a wide kernel with stride 4
/// gives each tap ~5 ms of context at 16 kHz before the residual stages.
pub const AUDIO_STEM_KERNEL: usize = 80;
pub const AUDIO_STEM_STRIDE: usize = 4;
pub const AUDIO_STEM_PAD: usize = 38;

/// 1D residual backbone over raw waveforms. Produces a `[b, f, l']` feature
/// sequence; temporal reduction to a fixed step count happens outside. All
/// convs use replicate padding so a constant waveform stays constant along
/// the sequence.
pub struct ResNet1d {
    stem: ConvBn1d,
    stages: Vec<Vec<BasicBlock1d>>,
    pub depth: Depth,
    pub out_features: usize,
}

impl ResNet1d {
    pub fn new(widths: [usize; 4], depth: Depth, rng: &mut ChaCha8Rng) -> Result<Self> {
        let stem = ConvBn1d::with_pad_mode(
            &[widths[0], 1, AUDIO_STEM_KERNEL],
            AUDIO_STEM_STRIDE,
            AUDIO_STEM_PAD,
            PadMode::Replicate,
            rng,
        )?;
        let mut stages = Vec::with_capacity(4);
        let mut prev = widths[0];
        for (stage, &blocks) in depth.block_counts().iter().enumerate() {
            let cout = widths[stage];
            let mut stage_blocks = Vec::with_capacity(blocks);
            for b in 0..blocks {
                let stride = if b == 0 { 2 } else { 1 };
                let block_cin = if b == 0 { prev } else { cout };
                stage_blocks.push(BasicBlock1d::new(block_cin, cout, stride, rng)?);
            }
            stages.push(stage_blocks);
            prev = cout;
        }
        Ok(ResNet1d { stem, stages, depth, out_features: widths[3] })
    }

    /// `[b, 1, l]` -> `[b, f, l/64]`.
    pub fn forward(&self, tape: &Tape, x: &Tensor, training: bool) -> Result<Tensor> {
        let mut h = self.stem.forward(tape, x, training, true)?;
        for stage in &self.stages {
            for block in stage {
                h = block.forward(tape, &h, training)?;
            }
        }
        Ok(h)
    }

    /// Overall temporal reduction factor of stem + stages.
    pub fn reduction(&self) -> usize {
        AUDIO_STEM_STRIDE * 2usize.pow(4)
    }

    /// Encode a `[b, 1, l]` waveform and average the feature sequence into
    /// exactly `steps` near-equal spans: -> `[b, steps, f]`. The waveform
    /// must be at least `steps` samples (and long enough that the reduced
    /// sequence still has `steps` positions).
    pub fn forward_to_steps(&self, tape: &Tape, waveform: &Tensor, steps: usize, training: bool) -> Result<Tensor> {
        if waveform.rank() != 3 || waveform.shape()[1] != 1 {
            return Err(avsr_autodiff::TensorError::ShapeMismatch {
                op: "resnet1d_audio",
                detail: format!("expected [b,1,l], got {:?}", waveform.shape()),
            });
        }
        if waveform.shape()[2] < steps {
            return Err(avsr_autodiff::TensorError::ShapeMismatch {
                op: "resnet1d_audio",
                detail: format!("waveform length {} shorter than {steps} steps", waveform.shape()[2]),
            });
        }
        let seq = self.forward(tape, waveform, training)?;
        crate::temporal::segment_mean(tape, &seq, steps)
    }
}

impl ParamSet for ResNet1d {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.stem.collect_params(&join(prefix, "stem"), out);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.collect_params(&join(prefix, &format!("stage{s}.block{b}")), out);
            }
        }
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.stem.collect_buffers(&join(prefix, "stem"), out);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.collect_buffers(&join(prefix, &format!("stage{s}.block{b}")), out);
            }
        }
    }
}

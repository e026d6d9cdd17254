//! End-to-end word classification models: audio-only, video-only and fused,
//! plus sequence-level labelling by highest average probability.

mod config;
mod error;
mod fused;
mod sequence;
mod stream;

pub use config::{AttentionFlags, ModelConfig, Profile};
pub use error::{ModelError, Result};
pub use fused::{ensure_recurrent_heads, FusedModel};
pub use sequence::classify_sequence;
pub use stream::{Head, Modality, StreamModel};

use avsr_autodiff::{Tape, Tensor, TensorError};

/// Common face of all three model variants for training and evaluation.
/// Inputs arrive as an optional video batch `[b,1,t,h,w]` and an optional
/// audio batch `[b,1,l]`; a model consumes what it needs.
pub trait ClipModel {
    fn classes(&self) -> usize;

    fn needs_video(&self) -> bool;
    fn needs_audio(&self) -> bool;

    /// Logits for the cross-entropy loss: `([n, classes], rows_per_clip)`.
    fn train_logits(
        &self,
        tape: &Tape,
        video: Option<&Tensor>,
        audio: Option<&Tensor>,
        training: bool,
    ) -> Result<(Tensor, usize)>;

    /// Per-timestep probabilities `[b, t', classes]` for sequence labelling.
    fn forward_probs(
        &self,
        tape: &Tape,
        video: Option<&Tensor>,
        audio: Option<&Tensor>,
        training: bool,
    ) -> Result<Tensor>;
}

fn require<'a>(input: Option<&'a Tensor>, what: &'static str) -> Result<&'a Tensor> {
    input.ok_or_else(|| {
        ModelError::Tensor(TensorError::ShapeMismatch {
            op: "forward",
            detail: format!("{what} input missing"),
        })
    })
}

impl ClipModel for StreamModel {
    fn classes(&self) -> usize {
        self.cfg.classes
    }
    fn needs_video(&self) -> bool {
        self.modality == Modality::Video
    }
    fn needs_audio(&self) -> bool {
        self.modality == Modality::Audio
    }
    fn train_logits(
        &self,
        tape: &Tape,
        video: Option<&Tensor>,
        audio: Option<&Tensor>,
        training: bool,
    ) -> Result<(Tensor, usize)> {
        let input = match self.modality {
            Modality::Video => require(video, "video")?,
            Modality::Audio => require(audio, "audio")?,
        };
        StreamModel::train_logits(self, tape, input, training)
    }
    fn forward_probs(
        &self,
        tape: &Tape,
        video: Option<&Tensor>,
        audio: Option<&Tensor>,
        training: bool,
    ) -> Result<Tensor> {
        let input = match self.modality {
            Modality::Video => require(video, "video")?,
            Modality::Audio => require(audio, "audio")?,
        };
        StreamModel::forward_probs(self, tape, input, training)
    }
}

impl ClipModel for FusedModel {
    fn classes(&self) -> usize {
        self.cfg.classes
    }
    fn needs_video(&self) -> bool {
        true
    }
    fn needs_audio(&self) -> bool {
        true
    }
    fn train_logits(
        &self,
        tape: &Tape,
        video: Option<&Tensor>,
        audio: Option<&Tensor>,
        training: bool,
    ) -> Result<(Tensor, usize)> {
        FusedModel::train_logits(self, tape, require(video, "video")?, require(audio, "audio")?, training)
    }
    fn forward_probs(
        &self,
        tape: &Tape,
        video: Option<&Tensor>,
        audio: Option<&Tensor>,
        training: bool,
    ) -> Result<Tensor> {
        FusedModel::forward_probs(self, tape, require(video, "video")?, require(audio, "audio")?, training)
    }
}

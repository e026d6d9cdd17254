//! Late-fusion model: per-timestep features from both streams are
//! concatenated and fed to a further two-layer BGRU, optionally gated by a
//! combined attention, then classified per timestep.

use avsr_autodiff::{Tape, Tensor, TensorError};
use avsr_layers::{
    join, AttentionSite, BgruStack, Classifier, NamedParam, ParamMap, ParamSet, TemporalAttention,
};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::{ModelError, Result};
use crate::stream::{Head, Modality, StreamModel};

pub struct FusedModel {
    pub cfg: ModelConfig,
    pub video: StreamModel,
    pub audio: StreamModel,
    pub fusion: BgruStack,
    pub attention: Option<TemporalAttention>,
    pub classifier: Classifier,
}

impl FusedModel {
    /// Fresh fused model; both streams run their recurrent heads.
    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let video = StreamModel::new(cfg, Modality::Video, rng)?;
        let audio = StreamModel::new(cfg, Modality::Audio, rng)?;
        // Streams feed 2H each; the fusion BGRU consumes their concatenation.
        let fusion = BgruStack::new(2 * cfg.stream_features(), cfg.gru_hidden, 2, rng)?;
        let attention = if cfg.attention.combined {
            Some(TemporalAttention::new(cfg.timesteps, AttentionSite::Combined)?)
        } else {
            None
        };
        let classifier = Classifier::new(cfg.stream_features(), cfg.classes, rng)?;
        Ok(FusedModel { cfg: cfg.clone(), video, audio, fusion, attention, classifier })
    }

    /// Build a fused model whose stream weights are copied verbatim from
    /// trained single-stream snapshots; the fusion BGRU, combined attention
    /// and classifier come from `rng`.
    pub fn from_stream_snapshots(
        cfg: &ModelConfig,
        audio_params: &ParamMap,
        video_params: &ParamMap,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let model = FusedModel::new(cfg, rng)?;
        let mut video_targets = Vec::new();
        model.video.collect_params("", &mut video_targets);
        model.video.collect_buffers("", &mut video_targets);
        video_params
            .apply_to(&video_targets)
            .map_err(|names| ModelError::Checkpoint(format!("video stream: missing/incompatible {names:?}")))?;
        let mut audio_targets = Vec::new();
        model.audio.collect_params("", &mut audio_targets);
        model.audio.collect_buffers("", &mut audio_targets);
        audio_params
            .apply_to(&audio_targets)
            .map_err(|names| ModelError::Checkpoint(format!("audio stream: missing/incompatible {names:?}")))?;
        Ok(model)
    }

    fn check_batches(&self, video: &Tensor, audio: &Tensor) -> Result<()> {
        if video.shape()[0] != audio.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "fused_forward",
                detail: format!(
                    "batch mismatch: video {} vs audio {}",
                    video.shape()[0],
                    audio.shape()[0]
                ),
            }
            .into());
        }
        Ok(())
    }

    /// Post-attention fused sequence `[b, t, 2*gru_hidden]`.
    pub fn fused_features(&self, tape: &Tape, video: &Tensor, audio: &Tensor, training: bool) -> Result<Tensor> {
        self.check_batches(video, audio)?;
        let vf = self.video.stream_features(tape, video, training)?;
        let af = self.audio.stream_features(tape, audio, training)?;
        let cat = tape.concat(&[vf, af], 2)?;
        let seq = self.fusion.forward(tape, &cat)?;
        match &self.attention {
            Some(attn) => Ok(attn.apply(tape, &seq)?),
            None => Ok(seq),
        }
    }

    /// Flat per-timestep logits `[b*t, classes]`.
    pub fn train_logits(&self, tape: &Tape, video: &Tensor, audio: &Tensor, training: bool) -> Result<(Tensor, usize)> {
        let seq = self.fused_features(tape, video, audio, training)?;
        Ok((self.classifier.logits_flat(tape, &seq)?, self.cfg.timesteps))
    }

    /// Per-timestep probabilities `[b, t, classes]`.
    pub fn forward_probs(&self, tape: &Tape, video: &Tensor, audio: &Tensor, training: bool) -> Result<Tensor> {
        let seq = self.fused_features(tape, video, audio, training)?;
        Ok(self.classifier.probs(tape, &seq)?)
    }

    /// Parameters of the fusion-only additions (phase-A trainables).
    pub fn fusion_params(&self) -> Vec<NamedParam> {
        let mut out = Vec::new();
        self.fusion.collect_params("fusion.bgru", &mut out);
        if let Some(attn) = &self.attention {
            attn.collect_params("combined.attention", &mut out);
        }
        self.classifier.collect_params("fusion.classifier", &mut out);
        out
    }

    pub fn stream_params(&self) -> Vec<NamedParam> {
        let mut out = Vec::new();
        self.video.collect_params("video", &mut out);
        self.audio.collect_params("audio", &mut out);
        out
    }
}

impl ParamSet for FusedModel {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.video.collect_params(&join(prefix, "video"), out);
        self.audio.collect_params(&join(prefix, "audio"), out);
        let mut fused = self.fusion_params();
        if !prefix.is_empty() {
            for p in fused.iter_mut() {
                p.name = format!("{prefix}.{}", p.name);
            }
        }
        out.extend(fused);
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        self.video.collect_buffers(&join(prefix, "video"), out);
        self.audio.collect_buffers(&join(prefix, "audio"), out);
    }
}

/// Keep both streams on their recurrent heads (the only valid configuration
/// inside the fused model).
pub fn ensure_recurrent_heads(model: &mut FusedModel) {
    model.video.set_head(Head::Bgru);
    model.audio.set_head(Head::Bgru);
}

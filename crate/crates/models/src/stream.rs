//! Single-modality stream: front-end/backbone encoder, two-layer BGRU,
//! optional temporal attention and a per-timestep classifier. A detachable
//! temporal-conv head replaces the BGRU path during stage-1 training.

use avsr_autodiff::{Tape, Tensor, TensorError};
use avsr_layers::{
    join, AttentionSite, BgruStack, Classifier, NamedParam, ParamSet, ResNet1d, ResNet2d,
    SpatiotemporalFrontend, TemporalAttention, TemporalConvBackend,
};
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Audio,
    Video,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }
}

/// Which head is active. Exactly one path runs per forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Stage-1 temporal convolutional back-end (sequence-level logits).
    TemporalConv,
    /// The recurrent path with the per-timestep classifier.
    Bgru,
}

enum Encoder {
    Video { frontend: SpatiotemporalFrontend, backbone: ResNet2d },
    Audio { backbone: ResNet1d },
}

pub struct StreamModel {
    pub cfg: ModelConfig,
    pub modality: Modality,
    encoder: Encoder,
    pub bgru: BgruStack,
    pub attention: Option<TemporalAttention>,
    pub classifier: Classifier,
    pub tconv: TemporalConvBackend,
    head: Head,
}

impl StreamModel {
    pub fn new(cfg: &ModelConfig, modality: Modality, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let widths = cfg.resnet_widths();
        let feat = cfg.backbone_features();
        let encoder = match modality {
            Modality::Video => Encoder::Video {
                frontend: SpatiotemporalFrontend::new(cfg.frontend_channels(), rng)?,
                backbone: ResNet2d::new(cfg.frontend_channels(), widths, cfg.video_depth, rng)?,
            },
            Modality::Audio => Encoder::Audio {
                backbone: ResNet1d::new(widths, cfg.audio_depth, rng)?,
            },
        };
        let attention_on = match modality {
            Modality::Video => cfg.attention.video,
            Modality::Audio => cfg.attention.audio,
        };
        let site = match modality {
            Modality::Video => AttentionSite::Video,
            Modality::Audio => AttentionSite::Audio,
        };
        Ok(StreamModel {
            modality,
            encoder,
            bgru: BgruStack::new(feat, cfg.gru_hidden, 2, rng)?,
            attention: if attention_on { Some(TemporalAttention::new(cfg.timesteps, site)?) } else { None },
            classifier: Classifier::new(cfg.stream_features(), cfg.classes, rng)?,
            tconv: TemporalConvBackend::new(feat, cfg.classes, rng)?,
            head: Head::Bgru,
            cfg: cfg.clone(),
        })
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn set_head(&mut self, head: Head) {
        self.head = head;
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let cfg = &self.cfg;
        let ok = match self.modality {
            Modality::Video => {
                input.rank() == 5
                    && input.shape()[1] == 1
                    && input.shape()[2] == cfg.timesteps
                    && input.shape()[3] == cfg.spatial.0
                    && input.shape()[4] == cfg.spatial.1
            }
            Modality::Audio => {
                input.rank() == 3 && input.shape()[1] == 1 && input.shape()[2] == cfg.audio_len
            }
        };
        if !ok {
            return Err(TensorError::ShapeMismatch {
                op: "stream_forward",
                detail: format!(
                    "{} stream got input {:?} (expected {})",
                    self.modality.as_str(),
                    input.shape(),
                    match self.modality {
                        Modality::Video => format!(
                            "[b,1,{},{},{}]",
                            cfg.timesteps, cfg.spatial.0, cfg.spatial.1
                        ),
                        Modality::Audio => format!("[b,1,{}]", cfg.audio_len),
                    }
                ),
            }
            .into());
        }
        Ok(())
    }

    /// Encoder output `[b, t, f]`, before any recurrence or gating.
    pub fn backbone_features(&self, tape: &Tape, input: &Tensor, training: bool) -> Result<Tensor> {
        self.check_input(input)?;
        let feats = match &self.encoder {
            Encoder::Video { frontend, backbone } => {
                let front = frontend.forward(tape, input, training)?;
                backbone.forward_per_timestep(tape, &front, training)?
            }
            Encoder::Audio { backbone } => {
                backbone.forward_to_steps(tape, input, self.cfg.timesteps, training)?
            }
        };
        Ok(feats)
    }

    /// The recurrent pipeline up to (and including) attention, before the
    /// classifier: `[b, t, 2*gru_hidden]`.
    pub fn stream_features(&self, tape: &Tape, input: &Tensor, training: bool) -> Result<Tensor> {
        let feats = self.backbone_features(tape, input, training)?;
        let seq = self.bgru.forward(tape, &feats)?;
        match &self.attention {
            Some(attn) => Ok(attn.apply(tape, &seq)?),
            None => Ok(seq),
        }
    }

    /// Training logits for the active head. Returns the logits `[n, classes]`
    /// and how many rows each clip occupies (T for the recurrent head, 1 for
    /// the temporal-conv head).
    pub fn train_logits(&self, tape: &Tape, input: &Tensor, training: bool) -> Result<(Tensor, usize)> {
        match self.head {
            Head::TemporalConv => {
                let feats = self.backbone_features(tape, input, training)?;
                let gated = match &self.attention {
                    Some(attn) => attn.apply(tape, &feats)?,
                    None => feats,
                };
                Ok((self.tconv.forward(tape, &gated, training)?, 1))
            }
            Head::Bgru => {
                let seq = self.stream_features(tape, input, training)?;
                Ok((self.classifier.logits_flat(tape, &seq)?, self.cfg.timesteps))
            }
        }
    }

    /// Per-timestep probabilities `[b, t, classes]` (t = 1 for the
    /// temporal-conv head).
    pub fn forward_probs(&self, tape: &Tape, input: &Tensor, training: bool) -> Result<Tensor> {
        let (logits, _) = self.train_logits(tape, input, training)?;
        match self.head {
            Head::TemporalConv => {
                let b = logits.shape()[0];
                let sm = tape.softmax(&logits, 1)?;
                Ok(tape.reshape(&sm, &[b, 1, self.cfg.classes])?)
            }
            Head::Bgru => {
                let bt = logits.shape()[0];
                let b = bt / self.cfg.timesteps;
                let sm = tape.softmax(&logits, 1)?;
                Ok(tape.reshape(&sm, &[b, self.cfg.timesteps, self.cfg.classes])?)
            }
        }
    }

    /// Parameter subsets by stage role.
    pub fn encoder_params(&self, prefix: &str) -> Vec<NamedParam> {
        let mut out = Vec::new();
        match &self.encoder {
            Encoder::Video { frontend, backbone } => {
                frontend.collect_params(&join(prefix, "frontend"), &mut out);
                backbone.collect_params(&join(prefix, "backbone"), &mut out);
            }
            Encoder::Audio { backbone } => {
                backbone.collect_params(&join(prefix, "backbone"), &mut out);
            }
        }
        out
    }

    pub fn attention_params(&self, prefix: &str) -> Vec<NamedParam> {
        let mut out = Vec::new();
        if let Some(attn) = &self.attention {
            attn.collect_params(&join(prefix, "attention"), &mut out);
        }
        out
    }

    pub fn bgru_params(&self, prefix: &str) -> Vec<NamedParam> {
        let mut out = Vec::new();
        self.bgru.collect_params(&join(prefix, "bgru"), &mut out);
        out
    }

    pub fn classifier_params(&self, prefix: &str) -> Vec<NamedParam> {
        let mut out = Vec::new();
        self.classifier.collect_params(&join(prefix, "classifier"), &mut out);
        out
    }

    pub fn tconv_params(&self, prefix: &str) -> Vec<NamedParam> {
        let mut out = Vec::new();
        self.tconv.collect_params(&join(prefix, "tconv"), &mut out);
        out
    }
}

impl ParamSet for StreamModel {
    fn collect_params(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        out.extend(self.encoder_params(prefix));
        out.extend(self.bgru_params(prefix));
        out.extend(self.attention_params(prefix));
        out.extend(self.classifier_params(prefix));
        out.extend(self.tconv_params(prefix));
    }
    fn collect_buffers(&self, prefix: &str, out: &mut Vec<NamedParam>) {
        match &self.encoder {
            Encoder::Video { frontend, backbone } => {
                frontend.collect_buffers(&join(prefix, "frontend"), out);
                backbone.collect_buffers(&join(prefix, "backbone"), out);
            }
            Encoder::Audio { backbone } => {
                backbone.collect_buffers(&join(prefix, "backbone"), out);
            }
        }
        self.tconv.collect_buffers(&join(prefix, "tconv"), out);
    }
}

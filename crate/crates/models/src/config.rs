use avsr_layers::Depth;

use crate::error::{ModelError, Result};

/// Scale profile. `Paper` is the architecture at its published size; `Tiny`
/// is the desk-scale configuration every acceptance run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Tiny,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionFlags {
    pub video: bool,
    pub audio: bool,
    pub combined: bool,
}

impl AttentionFlags {
    pub fn all(on: bool) -> Self {
        AttentionFlags { video: on, audio: on, combined: on }
    }
}

/// Full architectural description of one experiment's models.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub classes: usize,
    pub timesteps: usize,
    pub spatial: (usize, usize),
    pub audio_len: usize,
    pub video_depth: Depth,
    pub audio_depth: Depth,
    pub gru_hidden: usize,
    pub attention: AttentionFlags,
    pub profile: Profile,
}

impl ModelConfig {
    /// Desk-scale defaults: T=7, 24x24 frames, 1024-sample audio, 32 GRU
    /// units, 10 classes, depth-18 backbones, all attention sites enabled.
    pub fn tiny() -> Self {
        ModelConfig {
            classes: 10,
            timesteps: 7,
            spatial: (24, 24),
            audio_len: 1024,
            video_depth: Depth::D18,
            audio_depth: Depth::D18,
            gru_hidden: 32,
            attention: AttentionFlags::all(true),
            profile: Profile::Tiny,
        }
    }

    /// Published-scale defaults: 29 frames of 96x96, 1.16 s of 16 kHz audio,
    /// 1024 GRU units, 500 word classes. Depth 18 for both streams matches
    /// the ablation baseline.
    pub fn paper() -> Self {
        ModelConfig {
            classes: 500,
            timesteps: 29,
            spatial: (96, 96),
            audio_len: 18560,
            video_depth: Depth::D18,
            audio_depth: Depth::D18,
            gru_hidden: 1024,
            attention: AttentionFlags::all(true),
            profile: Profile::Paper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(ModelError::Config(format!("need >= 2 classes, got {}", self.classes)));
        }
        if self.timesteps < 1 {
            return Err(ModelError::Config("need >= 1 timestep".into()));
        }
        match self.profile {
            Profile::Tiny => {
                if self.timesteps != 7 || self.gru_hidden != 32 {
                    return Err(ModelError::Config(format!(
                        "tiny profile fixes T=7 and 32 GRU units, got T={} H={}",
                        self.timesteps, self.gru_hidden
                    )));
                }
            }
            Profile::Paper => {
                if self.timesteps != 29 || self.gru_hidden != 1024 {
                    return Err(ModelError::Config(format!(
                        "paper profile fixes T=29 and 1024 GRU units, got T={} H={}",
                        self.timesteps, self.gru_hidden
                    )));
                }
            }
        }
        if self.spatial.0 < 7 || self.spatial.1 < 7 {
            return Err(ModelError::Config(format!(
                "mouth crop {:?} below the 7x7 front-end kernel",
                self.spatial
            )));
        }
        if self.audio_len < self.timesteps {
            return Err(ModelError::Config(format!(
                "audio length {} shorter than {} timesteps",
                self.audio_len, self.timesteps
            )));
        }
        Ok(())
    }

    /// Front-end output channels.
    pub fn frontend_channels(&self) -> usize {
        match self.profile {
            Profile::Paper => 64,
            Profile::Tiny => 8,
        }
    }

    /// Residual stage widths; the final width is the stream feature size F.
    pub fn resnet_widths(&self) -> [usize; 4] {
        match self.profile {
            Profile::Paper => [64, 128, 256, 512],
            Profile::Tiny => [8, 16, 32, 64],
        }
    }

    pub fn backbone_features(&self) -> usize {
        self.resnet_widths()[3]
    }

    /// Width of one stream's BGRU output (forward + backward halves).
    pub fn stream_features(&self) -> usize {
        2 * self.gru_hidden
    }

    /// Stable textual form; checkpoint digests hash this.
    pub fn canonical_string(&self) -> String {
        format!(
            "classes={};timesteps={};spatial={}x{};audio_len={};video_depth={};audio_depth={};gru_hidden={};attention={},{},{};profile={}",
            self.classes,
            self.timesteps,
            self.spatial.0,
            self.spatial.1,
            self.audio_len,
            self.video_depth.as_u32(),
            self.audio_depth.as_u32(),
            self.gru_hidden,
            self.attention.video as u8,
            self.attention.audio as u8,
            self.attention.combined as u8,
            match self.profile {
                Profile::Paper => "paper",
                Profile::Tiny => "tiny",
            },
        )
    }
}

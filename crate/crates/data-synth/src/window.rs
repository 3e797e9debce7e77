use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Split membership of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn code(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One 32x32x3 labeled input sample: time steps x Doppler bins x channels,
/// stored row-major as f32 so file persistence is lossless.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerWindow {
    pub values: Vec<f32>,
    pub label: usize,
    pub antenna: usize,
    pub scenario: String,
}

impl DopplerWindow {
    pub const TIME_STEPS: usize = 32;
    pub const BINS: usize = 32;
    pub const CHANNELS: usize = 3;
    pub const VOLUME: usize = Self::TIME_STEPS * Self::BINS * Self::CHANNELS;

    pub fn value_at(&self, time: usize, bin: usize, channel: usize) -> f32 {
        self.values[(time * Self::BINS + bin) * Self::CHANNELS + channel]
    }

    /// Widens to the f64 layout the network consumes.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}

/// A labeled window collection. Windows are stored event-major: the same
/// physical event observed by all antennas occupies consecutive indices
/// `event * antennas + antenna`, and every window of an event shares one
/// split assignment so per-antenna predictions stay aligned for fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub windows: Vec<DopplerWindow>,
    pub class_names: Vec<String>,
    pub splits: Vec<Split>,
    pub seed: u64,
    pub antennas: usize,
}

impl Dataset {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn event_count(&self) -> usize {
        self.windows.len() / self.antennas
    }

    pub fn window_at(&self, event: usize, antenna: usize) -> &DopplerWindow {
        &self.windows[event * self.antennas + antenna]
    }

    pub fn label_of_event(&self, event: usize) -> usize {
        self.windows[event * self.antennas].label
    }

    pub fn split_of_event(&self, event: usize) -> Split {
        self.splits[event * self.antennas]
    }

    /// Event indices belonging to `split`, in stored order.
    pub fn events_in_split(&self, split: Split) -> Vec<usize> {
        (0..self.event_count()).filter(|&e| self.split_of_event(e) == split).collect()
    }

    /// Per-class, per-split window counts (counting all antennas).
    pub fn split_counts(&self) -> Vec<[usize; 3]> {
        let mut counts = vec![[0usize; 3]; self.class_count()];
        for (w, s) in self.windows.iter().zip(&self.splits) {
            counts[w.label][s.code() as usize] += 1;
        }
        counts
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.windows.len() % self.antennas != 0 {
            return Err(DataError::Input(format!(
                "window count {} is not a multiple of {} antennas",
                self.windows.len(),
                self.antennas
            )));
        }
        if self.splits.len() != self.windows.len() {
            return Err(DataError::Input("split table length mismatch".into()));
        }
        for (i, w) in self.windows.iter().enumerate() {
            if w.label >= self.class_count() {
                return Err(DataError::Input(format!(
                    "window {i} has label {} but only {} classes exist",
                    w.label,
                    self.class_count()
                )));
            }
            if w.values.len() != DopplerWindow::VOLUME {
                return Err(DataError::Input(format!(
                    "window {i} has {} values, expected {}",
                    w.values.len(),
                    DopplerWindow::VOLUME
                )));
            }
            if w.values.iter().any(|v| !v.is_finite()) {
                return Err(DataError::Input(format!("window {i} contains non-finite values")));
            }
        }
        Ok(())
    }
}

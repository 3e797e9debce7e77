//! Deterministic synthetic Doppler-window datasets: class-conditional
//! time-frequency signatures over 32x32x3 windows, four correlated antenna
//! views per event, stratified 80/10/10 splitting, and a binary container
//! format plus CSV import for externally produced traces.

mod generate;
mod io;
mod split;
mod window;

pub use generate::{
    generate_synthetic_dataset, separability, SynthConfig, CLASS_NAMES_5, CLASS_NAMES_8,
    DEFAULT_NOISE, NUM_ANTENNAS, SCENARIO_TAG,
};
pub use io::{
    decode_dataset, encode_dataset, import_csv, load_dataset, save_dataset, FORMAT_VERSION, MAGIC,
    RECORD_HEADER_BYTES,
};
pub use split::{assign_event_splits, split_dataset, DEFAULT_RATIOS};
pub use window::{DataError, Dataset, DopplerWindow, Result, Split};

pub mod am;
pub mod decoder;
pub mod eval;
pub mod frontend;
pub mod g2p;
pub mod io_textgrid;
pub mod phoneset;
pub mod textnorm;
pub mod par;
pub mod synth;
pub mod trainer;

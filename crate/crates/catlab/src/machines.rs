//! Bundled example machines, embedded at compile time.
//!
//! Each is a small, fully total machine exercising one behavior:
//!
//! * [`one_step`] — deterministic, accepts on the first step, tape untouched.
//! * [`coinflip`] — one coin: 0 rejects with the tape intact, 1 accepts after
//!   inverting cat bit 0. The tape survives with probability exactly 1/2.
//! * [`zeroer`] — deterministic, overwrites the whole cat tape with zeros
//!   (position tracked in the control state), then accepts.
//! * [`longchain`] — deterministic sixteen-step chain; every step inverts the
//!   single cat bit, so the tape is restored exactly on halt.
//! * [`oneflip`] — deterministic decider for `input[0] = 1` that always
//!   inverts cat bit 0, leaving exactly one flipped position.
//! * [`bpeps`] — two-coin randomized decider for `input[0] = 1` with zero
//!   tape damage and advantage 1/4 (yes: accept on coin1 OR coin2; no:
//!   accept on coin1 AND coin2).
//! * [`rhalf`] — one-sided: yes-instances accept with probability 1/2 while
//!   stamping cat bit 0 to 1 on the accepting path; no-instances always
//!   reject without touching the tape.
//! * [`catread`] — deterministic and damage-free; the answer is read off the
//!   catalytic tape (accept iff cat bit 0 is 1), so acceptance is uniform
//!   over tapes rather than over coins.

use crate::machine::{parse_machine_text, MachineSpec};

macro_rules! bundled {
    ($name:ident, $file:literal) => {
        pub fn $name() -> MachineSpec {
            parse_machine_text(include_str!(concat!("../machines/", $file)))
                .expect(concat!("bundled machine ", $file, " must parse"))
        }
    };
}

bundled!(one_step, "one_step.ctm");
bundled!(coinflip, "coinflip.ctm");
bundled!(zeroer, "zeroer.ctm");
bundled!(longchain, "longchain.ctm");
bundled!(oneflip, "oneflip.ctm");
bundled!(bpeps, "bpeps.ctm");
bundled!(rhalf, "rhalf.ctm");
bundled!(catread, "catread.ctm");

/// Name → source text of every bundled machine (for `bundled:<name>` lookups).
pub const BUNDLED: &[(&str, &str)] = &[
    ("one_step", include_str!("../machines/one_step.ctm")),
    ("coinflip", include_str!("../machines/coinflip.ctm")),
    ("zeroer", include_str!("../machines/zeroer.ctm")),
    ("longchain", include_str!("../machines/longchain.ctm")),
    ("oneflip", include_str!("../machines/oneflip.ctm")),
    ("bpeps", include_str!("../machines/bpeps.ctm")),
    ("rhalf", include_str!("../machines/rhalf.ctm")),
    ("catread", include_str!("../machines/catread.ctm")),
];

/// Looks a bundled machine up by name.
pub fn bundled(name: &str) -> Option<MachineSpec> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse_machine_text(text).expect("bundled machine must parse"))
}

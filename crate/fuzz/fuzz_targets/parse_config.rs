#![no_main]

use gda_core::io::{parse_config, Mode};
use libfuzzer_sys::fuzz_target;

const MODES: [Mode; 6] = [Mode::Surface, Mode::Equilibrium, Mode::Crra, Mode::Hdra, Mode::Verify, Mode::Figures];

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = parse_config(text) {
        // Validation must reject or accept, never panic.
        for mode in MODES {
            let _ = cfg.validate(mode);
        }
    }
});

#![no_main]

use gda_core::io::{read_strategy_csv, write_strategy_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(path) = read_strategy_csv(data) {
        let mut buf = Vec::new();
        write_strategy_csv(&mut buf, &path).expect("writing to memory cannot fail");
        let again = read_strategy_csv(&buf[..]).expect("written table must parse");
        assert_eq!(again.len(), path.len());
        assert_eq!(again.dim(), path.dim());
    }
});

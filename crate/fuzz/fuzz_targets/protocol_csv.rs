#![no_main]

use libfuzzer_sys::fuzz_target;
use stasplit::csvio::read_protocol_csv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(protocol) = read_protocol_csv(text) {
        let _ = protocol.eval(0.5 * protocol.t_final());
    }
});

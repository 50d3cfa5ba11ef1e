#![no_main]
use libfuzzer_sys::fuzz_target;

// header JSON, a NUL byte, then the little-endian payload
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(header) = std::str::from_utf8(&data[..split]) else {
        return;
    };
    let payload = data.get(split + 1..).unwrap_or(&[]);
    if let Ok((h, values)) = dalab::io::decode_field(header, payload) {
        assert_eq!(values.len(), 4 * h.grid.pow(4));
        assert!(values.iter().all(|v| v.is_finite()));
    }
});

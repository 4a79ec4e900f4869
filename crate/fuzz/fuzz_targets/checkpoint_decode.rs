#![no_main]

use libfuzzer_sys::fuzz_target;
use spf_nn::checkpoint::Checkpoint;

// Input is `<manifest json> \0 <blob>`; without a separator the whole input is
// tried as a manifest with an empty blob.
fuzz_target!(|data: &[u8]| {
    let (manifest, blob) = match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], &data[i + 1..]),
        None => (data, &[][..]),
    };
    if let Ok(ck) = Checkpoint::decode(manifest, blob) {
        let (m, b) = ck.encode().expect("decoded checkpoints re-encode");
        let again = Checkpoint::decode(m.as_bytes(), &b).expect("re-encoded checkpoints decode");
        assert_eq!(again.step, ck.step);
    }
});

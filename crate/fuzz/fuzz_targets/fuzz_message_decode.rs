#![no_main]

use libfuzzer_sys::fuzz_target;

use seesaw_core::message::SignedMessage;
use seesaw_core::wire::{WireDecode, WireEncode};

fuzz_target!(|data: &[u8]| {
    // Decoding untrusted bytes must never panic, and anything that
    // decodes must re-encode to exactly the input bytes.
    if let Ok(msg) = SignedMessage::from_wire(data) {
        assert_eq!(msg.to_wire(), data);
        let _ = msg.content_hash();
        let _ = msg.required_signers();
    }
});

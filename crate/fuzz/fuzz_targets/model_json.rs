#![no_main]

use libfuzzer_sys::fuzz_target;
use qkdkit::predictor::AutoencoderModel;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(model) = AutoencoderModel::from_json(text) else { return };
    // Keep runtime bounded on huge but valid networks.
    if model.n_params() > 100_000 {
        return;
    }
    let input = vec![0.5; model.input_dim()];
    let out = model.forward(&input).expect("validated model accepts its input size");
    assert_eq!(out.len(), model.output_dim());
});

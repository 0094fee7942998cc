#![no_main]

use libfuzzer_sys::fuzz_target;
use tramls::data::ResponseKind;
use tramls::io::{read_csv, ColumnRoles, ResponseConfig};

const KINDS: [ResponseKind; 6] = [
    ResponseKind::Exact,
    ResponseKind::Left,
    ResponseKind::Right,
    ResponseKind::Interval,
    ResponseKind::Ordinal,
    ResponseKind::Count,
];

// first byte picks the response kind and whether an event column is used
fuzz_target!(|data: &[u8]| {
    let Some((&head, body)) = data.split_first() else {
        return;
    };
    let roles = ColumnRoles {
        response: ResponseConfig {
            kind: KINDS[head as usize % KINDS.len()],
            event: (head & 0x80 != 0).then(|| "event".to_string()),
            positive: head & 0x40 != 0,
            ..ResponseConfig::default()
        },
        stratum: (head & 0x20 != 0).then(|| "s".to_string()),
        weights: (head & 0x10 != 0).then(|| "w".to_string()),
        ..ColumnRoles::default()
    };
    if let Ok(d) = read_csv(body, &roles) {
        assert_eq!(d.responses.len(), d.len());
    }
});

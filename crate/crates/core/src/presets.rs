//! The seven frequency groups from the reference measurement campaign, all
//! with a 10 MHz base clock.

use crate::clock::FrequencySet;

pub const PREVIOUS_WORK: &str = "Previous work";
pub const TWO_LOW_ONE_ABOVE_HALF_ONE_BELOW_HALF: &str = "Two low, one above half, one lower than half";
pub const TWO_HIGH_TWO_BELOW_HALF: &str = "Two high, two lower than half";
pub const THREE_HIGH_ONE_BELOW_HALF: &str = "Three high, one lower than half";
pub const THREE_LOW_ONE_BELOW_HALF: &str = "Three low, one lower than half";
pub const THREE_HIGH_ONE_ABOVE_HALF: &str = "Three high, one above half";
pub const TWO_HIGH_ONE_ABOVE_HALF_ONE_BELOW_HALF: &str = "Two high, one above half, one lower than half";

const MHZ: f64 = 1e6;

const TABLE: [(&str, [f64; 4]); 7] = [
    (PREVIOUS_WORK, [11.9713, 7.7315, 9.2778, 12.6515]),
    (TWO_LOW_ONE_ABOVE_HALF_ONE_BELOW_HALF, [9.5917, 9.0317, 6.2777, 4.0517]),
    (TWO_HIGH_TWO_BELOW_HALF, [3.6719, 4.4021, 12.9781, 14.4317]),
    (THREE_HIGH_ONE_BELOW_HALF, [4.7717, 11.5019, 12.0779, 13.5319]),
    (THREE_LOW_ONE_BELOW_HALF, [9.2003, 9.3001, 9.4001, 4.4003]),
    (THREE_HIGH_ONE_ABOVE_HALF, [5.9009, 11.5019, 12.0779, 13.5319]),
    (TWO_HIGH_ONE_ABOVE_HALF_ONE_BELOW_HALF, [11.8713, 10.6017, 5.1779, 3.6317]),
];

/// Reported rising-edge totals over 32000 base cycles and unique-frequency
/// counts, in table order.
pub const REPORTED_EDGES: [u64; 7] = [38872, 28610, 33992, 38910, 30796, 39929, 91369];
pub const REPORTED_UNIQUE: [usize; 7] = [412, 458, 502, 496, 458, 468, 504];

pub fn paper_sets() -> Vec<FrequencySet> {
    TABLE
        .iter()
        .map(|(label, f)| FrequencySet {
            label: (*label).to_string(),
            base_hz: 10.0 * MHZ,
            fundamentals: f.map(|v| v * MHZ),
            duty_cycle: 0.5,
        })
        .collect()
}

pub fn by_label(label: &str) -> Option<FrequencySet> {
    paper_sets().into_iter().find(|fs| fs.label == label)
}

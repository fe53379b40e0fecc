//! Built-in word lists of the synthetic task families.

/// Category names (the option texts) of the marker task. Consecutive pairs
/// are siblings.
pub const CATEGORIES: [&str; 8] = ["animal", "plant", "city", "river", "color", "shape", "metal", "fabric"];

/// Marker words per category, aligned with [`CATEGORIES`].
pub const MARKERS: [[&str; 8]; 8] = [
    ["crow", "horse", "tiger", "otter", "moose", "lizard", "falcon", "beaver"],
    ["fern", "cactus", "maple", "tulip", "ivy", "moss", "cedar", "lotus"],
    ["paris", "tokyo", "cairo", "lima", "oslo", "dublin", "quito", "seoul"],
    ["nile", "amazon", "danube", "volga", "ganges", "thames", "rhine", "yukon"],
    ["crimson", "teal", "amber", "violet", "indigo", "scarlet", "olive", "ivory"],
    ["circle", "square", "oval", "cube", "sphere", "prism", "cone", "spiral"],
    ["copper", "iron", "zinc", "nickel", "cobalt", "silver", "tin", "lead"],
    ["cotton", "wool", "silk", "linen", "denim", "velvet", "satin", "felt"],
];

pub fn sibling(category: usize) -> usize {
    category ^ 1
}

pub const MOODS: [&str; 4] = ["positive", "negative", "neutral", "unsure"];

/// Mood keywords aligned with [`MOODS`]; positive/negative and
/// neutral/unsure are siblings.
pub const MOOD_WORDS: [[&str; 6]; 4] = [
    ["great", "lovely", "superb", "joyful", "charming", "splendid"],
    ["awful", "dreadful", "bitter", "gloomy", "horrid", "dismal"],
    ["ordinary", "typical", "average", "routine", "standard", "regular"],
    ["maybe", "perhaps", "possibly", "unclear", "doubtful", "uncertain"],
];

/// Words the copy task asks to repeat.
pub const CUE_WORDS: [&str; 24] = [
    "apple", "stone", "candle", "ladder", "mirror", "pillow", "basket", "hammer", "garden", "window", "bottle", "rocket", "pencil",
    "button", "anchor", "blanket", "engine", "feather", "helmet", "island", "jacket", "kettle", "lemon", "magnet",
];

pub const CUE_MARK: &str = "cue";

pub const PARITY_LABELS: [&str; 4] = ["even", "odd", "none", "many"];
pub const DOT: &str = "dot";

/// Default filler words for stems.
pub const FILLERS: [&str; 16] = [
    "the", "a", "near", "old", "small", "big", "quiet", "bright", "we", "saw", "found", "there", "today", "some", "new", "far",
];

/// Every word any generator may emit.
pub fn all_words() -> Vec<&'static str> {
    let mut out: Vec<&str> = Vec::new();
    out.extend(CATEGORIES);
    out.extend(MARKERS.concat());
    out.extend(MOODS);
    out.extend(MOOD_WORDS.concat());
    out.extend(CUE_WORDS);
    out.extend([CUE_MARK, DOT]);
    out.extend(PARITY_LABELS);
    out.extend(FILLERS);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn word_lists_do_not_collide() {
        let mut all = BTreeSet::new();
        for w in all_words() {
            assert!(all.insert(w), "{w} appears twice");
            assert!(!crate::tokenizer::LETTERS.contains(&w));
        }
    }
}

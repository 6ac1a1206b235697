use unicode_normalization::UnicodeNormalization;

const SPLIT_PUNCT: [char; 8] = ['.', ',', '!', '?', '¿', '¡', ';', ':'];

/// Canonical text form used for both training and scoring.
///
/// NFC composition, lowercase, the marks `. , ! ? ¿ ¡ ; :` split into their
/// own tokens, anything else that is not a letter, digit or whitespace
/// replaced by a space, whitespace collapsed. Accents are kept.
pub fn normalize(text: &str) -> String {
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.nfc().flat_map(char::to_lowercase) {
        if SPLIT_PUNCT.contains(&c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else if c.is_alphanumeric() {
            spaced.push(c);
        } else {
            spaced.push(' ');
        }
    }
    spaced.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Whitespace tokens of the normalized text.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

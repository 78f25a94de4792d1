/// Contraction suffixes split off the word they attach to.
const CLITICS: [&str; 7] = ["n't", "'s", "'re", "'ll", "'ve", "'d", "'m"];

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

fn is_clitic(s: &str) -> bool {
    CLITICS.contains(&s)
}

/// Lowercases, splits on whitespace, then splits leading/trailing
/// punctuation (one token per character) and contraction suffixes.
///
/// Every produced token tokenizes to itself.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        split_chunk(chunk, &mut out);
    }
    out
}

fn split_chunk(chunk: &str, out: &mut Vec<String>) {
    if chunk.is_empty() {
        return;
    }
    if is_clitic(chunk) {
        out.push(chunk.to_string());
        return;
    }
    let core = chunk.trim_end_matches(is_punct);
    let trailing = &chunk[core.len()..];
    if core.is_empty() {
        out.extend(chunk.chars().map(String::from));
        return;
    }
    if !is_clitic(core) {
        if let Some(first) = core.chars().next().filter(|&c| is_punct(c)) {
            out.push(first.to_string());
            split_chunk(&chunk[first.len_utf8()..], out);
            return;
        }
    }
    match CLITICS.iter().find(|c| core.len() > c.len() && core.ends_with(*c)) {
        Some(clitic) => {
            split_chunk(&core[..core.len() - clitic.len()], out);
            out.push(clitic.to_string());
        }
        None => out.push(core.to_string()),
    }
    out.extend(trailing.chars().map(String::from));
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn contraction_and_final_period() {
        assert_eq!(
            tokenize("It's never too late."),
            ["it", "'s", "never", "too", "late", "."]
        );
    }

    #[test]
    fn empty_and_blank_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n").is_empty());
    }

    #[test]
    fn surrounding_punctuation() {
        assert_eq!(
            tokenize("\"Hello,\" she said!"),
            ["\"", "hello", ",", "\"", "she", "said", "!"]
        );
        assert_eq!(tokenize("don't (u.s.a)"), ["do", "n't", "(", "u.s.a", ")"]);
        assert_eq!(tokenize("..."), [".", ".", "."]);
    }

    proptest! {
        #[test]
        fn retokenizing_is_a_fixed_point(text in "[a-zA-Z'.,!?()\" -]{0,40}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }
    }
}

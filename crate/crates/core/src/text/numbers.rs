/// Largest integer [`spell_number`] accepts.
pub const MAX_SPELLED: u64 = 999_999;

const ONES: [&str; 20] = [
    "zero",
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    "seven",
    "eight",
    "nine",
    "ten",
    "eleven",
    "twelve",
    "thirteen",
    "fourteen",
    "fifteen",
    "sixteen",
    "seventeen",
    "eighteen",
    "nineteen",
];
const TENS: [&str; 10] = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];

fn below_thousand(n: u64, out: &mut Vec<&'static str>) {
    debug_assert!(n > 0 && n < 1000);
    let (hundreds, rest) = (n / 100, n % 100);
    if hundreds > 0 {
        out.push(ONES[hundreds as usize]);
        out.push("hundred");
    }
    if rest >= 20 {
        out.push(TENS[(rest / 10) as usize]);
        if rest % 10 > 0 {
            out.push(ONES[(rest % 10) as usize]);
        }
    } else if rest > 0 {
        out.push(ONES[rest as usize]);
    }
}

/// English words for `n`, space separated, without hyphens or "and":
/// `24 -> "twenty four"`, `105 -> "one hundred five"`.
pub fn spell_number(n: u64) -> Option<String> {
    if n > MAX_SPELLED {
        return None;
    }
    if n == 0 {
        return Some(ONES[0].to_string());
    }
    let mut words = Vec::new();
    let (thousands, rest) = (n / 1000, n % 1000);
    if thousands > 0 {
        below_thousand(thousands, &mut words);
        words.push("thousand");
    }
    if rest > 0 {
        below_thousand(rest, &mut words);
    }
    Some(words.join(" "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn known_spellings() {
        assert_eq!(spell_number(0).unwrap(), "zero");
        assert_eq!(spell_number(24).unwrap(), "twenty four");
        assert_eq!(spell_number(40).unwrap(), "forty");
        assert_eq!(spell_number(105).unwrap(), "one hundred five");
        assert_eq!(spell_number(1000).unwrap(), "one thousand");
        assert_eq!(spell_number(999_999).unwrap(), "nine hundred ninety nine thousand nine hundred ninety nine");
        assert!(spell_number(1_000_000).is_none());
    }

    #[test]
    fn spelling_is_injective_below_ten_thousand() {
        let mut seen = HashSet::new();
        for n in 0..10_000 {
            let s = spell_number(n).unwrap();
            assert!(!s.contains('-'));
            assert!(seen.insert(s), "duplicate spelling for {n}");
        }
    }
}

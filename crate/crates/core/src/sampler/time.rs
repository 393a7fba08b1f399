//! Year and age shifting for TIME entities.

use std::sync::LazyLock;

use regex::{Captures, Regex};

static TIME_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:(age\s+)(\d{1,3})|(\d{4}))\b").expect("valid pattern"));

/// Shifts every four-digit year and every "age N" by `offset`. Ages clamp at 0.
pub fn shift_time_tokens(label: &str, offset: i64) -> String {
    if offset == 0 {
        return label.to_owned();
    }
    TIME_TOKEN
        .replace_all(label, |c: &Captures| {
            if let (Some(prefix), Some(age)) = (c.get(1), c.get(2)) {
                let n: i64 = age.as_str().parse().expect("digits");
                format!("{}{}", prefix.as_str(), (n + offset).max(0))
            } else {
                let year: i64 = c[3].parse().expect("digits");
                (year + offset).to_string()
            }
        })
        .into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifts_years_and_ages() {
        assert_eq!(shift_time_tokens("1985", 2), "1987");
        assert_eq!(shift_time_tokens("from 1999 to 2001", -1), "from 1998 to 2000");
        assert_eq!(shift_time_tokens("age nine", 3), "age nine");
        assert_eq!(shift_time_tokens("at Age 9", 3), "at Age 12");
        assert_eq!(shift_time_tokens("age 1", -4), "age 0");
    }

    #[test]
    fn leaves_other_numbers() {
        assert_eq!(shift_time_tokens("route 66 in 19850", 5), "route 66 in 19850");
        assert_eq!(shift_time_tokens("the 1980s", 1), "the 1980s");
        assert_eq!(shift_time_tokens("1985", 0), "1985");
    }
}

//! Splitting on naming conventions: camelCase, snake_case, digit runs.

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Lower,
    Upper,
    Digit,
    Other,
}

fn class(c: char) -> Class {
    if c.is_ascii_lowercase() {
        Class::Lower
    } else if c.is_ascii_uppercase() {
        Class::Upper
    } else if c.is_ascii_digit() {
        Class::Digit
    } else {
        Class::Other
    }
}

/// Splits `name` into lowercase segments.
///
/// Cuts at lower→UPPER, at the last capital of an acronym run followed by a
/// lowercase letter (`HTTPServer` → `http`, `server`), at letter↔digit
/// transitions and at any non-alphanumeric delimiter. Digit runs are kept.
pub fn split_by_convention(name: &str) -> Vec<String> {
    let chars: Vec<char> = name.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let k = class(c);
        if k == Class::Other {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        if let Some(prev) = cur.chars().last() {
            let pk = class(prev);
            let next_lower = chars.get(i + 1).is_some_and(|n| n.is_ascii_lowercase());
            let cut = match (pk, k) {
                (Class::Lower, Class::Upper) => true,
                (Class::Upper, Class::Upper) => next_lower,
                (Class::Digit, Class::Lower | Class::Upper) | (Class::Lower | Class::Upper, Class::Digit) => true,
                _ => false,
            };
            if cut {
                out.push(std::mem::take(&mut cur));
            }
        }
        cur.push(c);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out.into_iter().map(|s| s.to_ascii_lowercase()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(s: &str) -> Vec<String> {
        split_by_convention(s)
    }

    #[test]
    fn conventions() {
        assert_eq!(split("getTableSize"), ["get", "table", "size"]);
        assert_eq!(split("copyRawBlock"), ["copy", "raw", "block"]);
        assert_eq!(split("set_rand"), ["set", "rand"]);
        assert_eq!(split("bin_set"), ["bin", "set"]);
        assert_eq!(split("x2realloc"), ["x", "2", "realloc"]);
        assert_eq!(split("name2oid"), ["name", "2", "oid"]);
        assert_eq!(split("HTTPServer"), ["http", "server"]);
        assert_eq!(split("__libc_start_main"), ["libc", "start", "main"]);
        assert_eq!(split("test nofork sideeffects"), ["test", "nofork", "sideeffects"]);
        assert_eq!(split("getPasswd12"), ["get", "passwd", "12"]);
    }

    #[test]
    fn empty() {
        assert!(split("").is_empty());
        assert!(split("__").is_empty());
    }
}

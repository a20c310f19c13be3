//! Day-number calendar helpers.
//!
//! Dates are stored as signed day counts since 1900-01-01. The extended
//! winter is the 137 consecutive days ending on 31 March, which starts on
//! 15 November in common years and 16 November when the winter contains
//! 29 February.

use chrono::{Datelike, Duration, NaiveDate};

use crate::error::{Error, Result};

/// Number of daily points in one extended winter.
pub const WINTER_DAYS: usize = 137;

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1900, 1, 1).expect("valid epoch")
}

pub fn days_from_date(d: NaiveDate) -> i64 {
    (d - epoch()).num_days()
}

pub fn date_from_days(days: i64) -> NaiveDate {
    epoch() + Duration::days(days)
}

pub fn days_from_ymd(year: i32, month: u32, day: u32) -> Result<i64> {
    NaiveDate::from_ymd_opt(year, month, day)
        .map(days_from_date)
        .ok_or_else(|| Error::Argument(format!("invalid date {year}-{month:02}-{day:02}")))
}

pub fn parse_iso(s: &str) -> Option<i64> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").ok().map(days_from_date)
}

pub fn format_iso(days: i64) -> String {
    date_from_days(days).format("%Y-%m-%d").to_string()
}

pub fn year_of(days: i64) -> i32 {
    date_from_days(days).year()
}

/// Day-of-year key in 1..=365 using a common-year calendar; 29 February
/// shares the key of 28 February.
pub fn doy_key(days: i64) -> u16 {
    const CUM: [u16; 12] = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334];
    let d = date_from_days(days);
    let day = if d.month() == 2 && d.day() == 29 { 28 } else { d.day() };
    CUM[d.month0() as usize] + day as u16
}

/// Last day (31 March) of the winter that starts in `year`.
pub fn winter_end(year: i32) -> i64 {
    days_from_date(NaiveDate::from_ymd_opt(year + 1, 3, 31).expect("valid date"))
}

/// First day of the winter that starts in `year`.
pub fn winter_start(year: i32) -> i64 {
    winter_end(year) - (WINTER_DAYS as i64 - 1)
}

/// Winter (identified by the year of its November) containing `days`, if any.
pub fn winter_of(days: i64) -> Option<i32> {
    let d = date_from_days(days);
    let year = if d.month() >= 11 { d.year() } else { d.year() - 1 };
    (days >= winter_start(year) && days <= winter_end(year)).then_some(year)
}

pub fn in_extended_winter(days: i64) -> bool {
    winter_of(days).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn winter_has_137_days_in_common_and_leap_years() {
        for year in [1979, 1983, 1999, 2000] {
            let n = (winter_start(year)..=winter_end(year)).filter(|&d| in_extended_winter(d)).count();
            assert_eq!(n, WINTER_DAYS);
        }
        assert_eq!(format_iso(winter_start(1980)), "1980-11-15");
        assert_eq!(format_iso(winter_start(1983)), "1983-11-16");
        assert_eq!(format_iso(winter_start(1979)), "1979-11-16");
        assert!(!in_extended_winter(winter_start(1980) - 1));
    }

    #[test]
    fn feb_29_folds_into_feb_28() {
        let leap = days_from_ymd(2004, 2, 29).unwrap();
        let prev = days_from_ymd(2004, 2, 28).unwrap();
        assert_eq!(doy_key(leap), doy_key(prev));
        assert_eq!(doy_key(days_from_ymd(2004, 3, 1).unwrap()), 60);
        assert_eq!(doy_key(days_from_ymd(2003, 12, 31).unwrap()), 365);
    }

    #[test]
    fn iso_round_trip() {
        let d = days_from_ymd(1980, 11, 16).unwrap();
        assert_eq!(parse_iso(&format_iso(d)), Some(d));
        assert_eq!(parse_iso("1900-01-01"), Some(0));
        assert_eq!(parse_iso("1980-13-01"), None);
    }
}

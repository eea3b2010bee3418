//! Slot arithmetic on the 365-day (no Feb 29) calendar at six-hour cadence.

use chrono::{Datelike, NaiveDate, NaiveDateTime, Timelike};

pub const STEPS_PER_DAY: usize = 4;
/// 365 days x 4 six-hour slots.
pub const SLOTS_PER_YEAR: usize = 365 * STEPS_PER_DAY;

pub fn is_leap_day(date: NaiveDate) -> bool {
    date.month() == 2 && date.day() == 29
}

/// Day of year in 1..=365 counting as if Feb 29 did not exist.
/// Returns None on Feb 29 itself.
pub fn noleap_day_of_year(date: NaiveDate) -> Option<usize> {
    if is_leap_day(date) {
        return None;
    }
    let mut doy = date.ordinal() as usize;
    if date.leap_year() && doy > 60 {
        doy -= 1; // Feb 29 is ordinal 60 in leap years
    }
    Some(doy)
}

/// Within-year slot in 0..1460: 4 * (day_of_year - 1) + hour / 6.
/// None for Feb 29 or timestamps off the six-hour grid.
pub fn slot_of(dt: NaiveDateTime) -> Option<usize> {
    if dt.hour() % 6 != 0 || dt.minute() != 0 || dt.second() != 0 {
        return None;
    }
    let doy = noleap_day_of_year(dt.date())?;
    Some((doy - 1) * STEPS_PER_DAY + (dt.hour() / 6) as usize)
}

/// Timestamp of a (year, slot) pair on the no-leap calendar.
pub fn datetime_of_slot(year: i32, slot: usize) -> NaiveDateTime {
    assert!(slot < SLOTS_PER_YEAR);
    let mut doy = slot / STEPS_PER_DAY + 1;
    let quarter = slot % STEPS_PER_DAY;
    // ordinal dates count Feb 29 in leap years; skip over it
    let leap = NaiveDate::from_ymd_opt(year, 1, 1).unwrap().leap_year();
    if leap && doy >= 60 {
        doy += 1;
    }
    NaiveDate::from_yo_opt(year, doy as u32)
        .unwrap()
        .and_hms_opt(quarter as u32 * 6, 0, 0)
        .unwrap()
}

use super::LaneMask;

/// Extra cycles a wave-wide scratchpad access costs because of bank
/// conflicts. Word `a / bank_width` lives in bank `word % bank_count`; each
/// bank serves one distinct word per cycle, and lanes reading the same word
/// share it.
pub fn count_bank_conflicts(addresses: &[u32], active: LaneMask, bank_count: u32, bank_width: u32) -> u64 {
    let mut buf = [(0u32, 0u32); 64];
    let mut n = 0;
    for (lane, &a) in addresses.iter().enumerate().take(64) {
        if active >> lane & 1 == 1 {
            let word = a / bank_width;
            buf[n] = (word % bank_count, word);
            n += 1;
        }
    }
    let words = &mut buf[..n];
    words.sort_unstable();
    let mut extra = 0;
    let mut i = 0;
    while i < words.len() {
        let bank = words[i].0;
        let start = i;
        let mut distinct = 0;
        while i < words.len() && words[i].0 == bank {
            if i == start || words[i] != words[i - 1] {
                distinct += 1;
            }
            i += 1;
        }
        extra += distinct - 1;
    }
    extra
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strided(stride: u32) -> Vec<u32> {
        (0..32).map(|lane| lane * stride * 4).collect()
    }

    #[test]
    fn column_access() {
        let all = u32::MAX as LaneMask;
        assert_eq!(count_bank_conflicts(&strided(32), all, 32, 4), 31);
        assert_eq!(count_bank_conflicts(&strided(33), all, 32, 4), 0);
        assert_eq!(count_bank_conflicts(&strided(1), all, 32, 4), 0);
        assert_eq!(count_bank_conflicts(&strided(2), all, 32, 4), 16);
    }

    #[test]
    fn broadcast_is_free_and_inactive_lanes_ignored() {
        assert_eq!(count_bank_conflicts(&[128; 32], u32::MAX as LaneMask, 32, 4), 0);
        assert_eq!(count_bank_conflicts(&strided(32), 0b1, 32, 4), 0);
        assert_eq!(count_bank_conflicts(&strided(32), 0b111, 32, 4), 2);
    }
}

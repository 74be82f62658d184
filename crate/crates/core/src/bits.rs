//! Helpers for bit sequences.
//!
//! Bits are stored one per byte (`0` or `1`), most significant bit first when
//! converted from integers.

/// Appends the low `width` bits of `value`, most significant first.
pub fn push_uint(out: &mut Vec<u8>, value: u64, width: usize) {
    debug_assert!(width <= 64);
    for shift in (0..width).rev() {
        out.push(((value >> shift) & 1) as u8);
    }
}

/// Reads `bits` (at most 64) as an unsigned integer, most significant first.
pub fn read_uint(bits: &[u8]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | u64::from(b & 1))
}

/// Element-wise XOR of equal-length sequences.
pub fn xor(a: &[u8], b: &[u8]) -> Vec<u8> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

pub fn xor_in_place(data: &mut [u8], key: &[u8]) {
    debug_assert_eq!(data.len(), key.len());
    for (d, k) in data.iter_mut().zip(key) {
        *d ^= k;
    }
}

/// Number of positions where the sequences differ.
pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Packs bits into 64-bit words, most significant first; the tail word is
/// left-aligned and zero-filled.
pub fn pack_words(bits: &[u8]) -> Vec<u64> {
    bits.chunks(64)
        .map(|chunk| read_uint(chunk) << (64 - chunk.len()))
        .collect()
}

/// Lowercase hex rendering of a bit string, left-aligned to whole nibbles.
pub fn to_hex(bits: &[u8]) -> String {
    bits.chunks(4)
        .map(|c| {
            let v = read_uint(c) << (4 - c.len());
            char::from_digit(v as u32, 16).unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uint_round_trip() {
        let mut v = Vec::new();
        push_uint(&mut v, 0b1011, 4);
        push_uint(&mut v, 0xdead_beef, 32);
        assert_eq!(v[..4], [1, 0, 1, 1]);
        assert_eq!(read_uint(&v[..4]), 0b1011);
        assert_eq!(read_uint(&v[4..]), 0xdead_beef);
    }

    #[test]
    fn pack_left_aligns_tail() {
        let bits = [1u8, 0, 1];
        assert_eq!(pack_words(&bits), vec![0b101u64 << 61]);
        assert_eq!(to_hex(&[1, 0, 1, 0, 1]), "a8");
    }

    #[test]
    fn xor_and_hamming() {
        let a = [1u8, 0, 1, 1];
        let b = [1u8, 1, 0, 1];
        assert_eq!(xor(&a, &b), vec![0, 1, 1, 0]);
        assert_eq!(hamming(&a, &b), 2);
    }
}

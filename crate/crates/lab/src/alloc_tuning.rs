//! glibc allocator thresholds: blocks up to 32 MiB come from the heap and
//! are reused across training steps.

#[cfg(all(target_os = "linux", target_env = "gnu"))]
pub fn tune() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        const LIMIT: libc::c_int = 32 << 20;
        // SAFETY: mallopt only adjusts allocator parameters.
        unsafe {
            libc::mallopt(libc::M_MMAP_THRESHOLD, LIMIT);
            libc::mallopt(libc::M_TRIM_THRESHOLD, 4 * LIMIT);
        }
    });
}

#[cfg(not(all(target_os = "linux", target_env = "gnu")))]
pub fn tune() {}

int main(void) {
  static float a[64], b[64], c[64];
  hls_rng_seed(HLS_INPUT_SEED);
  for (int i = 0; i < 64; i++) {
    a[i] = (float)hls_rng_f64();
    b[i] = (float)hls_rng_f64();
  }
  {entry_symbol}(a, b, c);
  for (int i = 0; i < 64; i++)
    hls_print_f64(c[i]);
  return 0;
}

int main(void) {
  static double x[128], y[128];
  hls_rng_seed(HLS_INPUT_SEED);
  for (int i = 0; i < 128; i++) {
    x[i] = hls_rng_f64() - 0.5;
    y[i] = hls_rng_f64() - 0.5;
  }
  hls_print_f64({entry_symbol}(x, y));
  return 0;
}

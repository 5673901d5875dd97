int main(void) {
  static double A[32], B[32];
  hls_rng_seed(HLS_INPUT_SEED);
  for (int i = 0; i < 32; i++) {
    A[i] = hls_rng_f64();
    B[i] = 0.0;
  }
  {entry_symbol}(A, B);
  for (int i = 0; i < 32; i++)
    hls_print_f64(A[i]);
  return 0;
}

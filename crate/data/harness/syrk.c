int main(void) {
  static double C[8][8], A[8][6];
  hls_rng_seed(HLS_INPUT_SEED);
  for (int i = 0; i < 8; i++)
    for (int j = 0; j < 8; j++)
      C[i][j] = hls_rng_f64();
  for (int i = 0; i < 8; i++)
    for (int k = 0; k < 6; k++)
      A[i][k] = hls_rng_f64();
  {entry_symbol}(1.5, 1.2, C, A);
  for (int i = 0; i < 8; i++)
    for (int j = 0; j < 8; j++)
      hls_print_f64(C[i][j]);
  return 0;
}

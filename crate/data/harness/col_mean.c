int main(void) {
  static double data[16][8], mean[8];
  hls_rng_seed(HLS_INPUT_SEED);
  for (int i = 0; i < 16; i++)
    for (int j = 0; j < 8; j++)
      data[i][j] = 10.0 * hls_rng_f64();
  {entry_symbol}(data, mean);
  for (int j = 0; j < 8; j++)
    hls_print_f64(mean[j]);
  return 0;
}

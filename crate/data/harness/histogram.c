int main(void) {
  static int data[256], hist[16];
  hls_rng_seed(HLS_INPUT_SEED);
  for (int i = 0; i < 256; i++)
    data[i] = (int)hls_rng_int(-2, 17);
  {entry_symbol}(data, hist);
  for (int b = 0; b < 16; b++)
    hls_print_i64(hist[b]);
  return 0;
}

#define ROWS 16
#define COLS 8

void col_mean(const double data[ROWS][COLS], double mean[COLS]) {
  for (int j = 0; j < COLS; j++) {
#pragma HLS PIPELINE II=1
    double s = 0.0;
    for (int i = 0; i < ROWS; i++)
      s += data[i][j];
    mean[j] = s / ROWS;
  }
}

#include <stdio.h>
#include "ponas.h"
int main(void) {
  uint32_t genes[19]; for (int i = 0; i < 19; i++) genes[i] = 11;
  PonasCost c;
  PonasStatus s = ponas_architecture_cost(genes, 19, &c);
  printf("%d %llu %llu %s\n", s, (unsigned long long)c.flops, (unsigned long long)c.params, ponas_version());
  return s != PONAS_STATUS_OK;
}

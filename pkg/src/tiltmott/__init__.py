"""Particle-hole pair creation in a tilted Bose-Hubbard Mott insulator."""

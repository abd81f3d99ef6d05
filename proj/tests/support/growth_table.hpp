#pragma once
// Generated by gen_growth_table.py; do not edit by hand.
#include <cstddef>

struct GrowthRow { std::size_t L, b; const char* midas; const char* lidas; };

inline constexpr GrowthRow kGrowthTable[] = {
    {4, 4, "0 1 2 3 0' 1' 2' 3'",
     "0 1 2 3 0' 1' 2' 3'"},
    {8, 4, "0 1 2 3 0' 1' 2' 3' 4 5 6 7",
     "0 1 2 3 4 5 2' 3' 4' 5' 6 7"},
    {8, 8, "0 1 2 3 4 5 6 7 0' 1' 2' 3' 4' 5' 6' 7'",
     "0 1 2 3 4 5 6 7 0' 1' 2' 3' 4' 5' 6' 7'"},
    {12, 3, "0 1 2 3 4 5 3' 4' 5' 6 7 8 9 10 11",
     "0 1 2 3 4 5 6 4' 5' 6' 7 8 9 10 11"},
    {12, 4, "0 1 2 3 4 5 6 7 4' 5' 6' 7' 8 9 10 11",
     "0 1 2 3 4 5 6 7 4' 5' 6' 7' 8 9 10 11"},
    {16, 4, "0 1 2 3 4 5 6 7 4' 5' 6' 7' 8 9 10 11 12 13 14 15",
     "0 1 2 3 4 5 6 7 8 9 6' 7' 8' 9' 10 11 12 13 14 15"},
    {16, 8, "0 1 2 3 4 5 6 7 0' 1' 2' 3' 4' 5' 6' 7' 8 9 10 11 12 13 14 15",
     "0 1 2 3 4 5 6 7 8 9 10 11 4' 5' 6' 7' 8' 9' 10' 11' 12 13 14 15"},
    {20, 4, "0 1 2 3 4 5 6 7 8 9 10 11 8' 9' 10' 11' 12 13 14 15 16 17 18 19",
     "0 1 2 3 4 5 6 7 8 9 10 11 8' 9' 10' 11' 12 13 14 15 16 17 18 19"},
    {24, 3, "0 1 2 3 4 5 6 7 8 9 10 11 9' 10' 11' 12 13 14 15 16 17 18 19 20 21 22 23",
     "0 1 2 3 4 5 6 7 8 9 10 11 12 10' 11' 12' 13 14 15 16 17 18 19 20 21 22 23"},
    {24, 4, "0 1 2 3 4 5 6 7 8 9 10 11 8' 9' 10' 11' 12 13 14 15 16 17 18 19 20 21 22 23",
     "0 1 2 3 4 5 6 7 8 9 10 11 12 13 10' 11' 12' 13' 14 15 16 17 18 19 20 21 22 23"},
    {24, 8, "0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 8' 9' 10' 11' 12' 13' 14' 15' 16 17 18 19 20 21 22 23",
     "0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 8' 9' 10' 11' 12' 13' 14' 15' 16 17 18 19 20 21 22 23"},
};

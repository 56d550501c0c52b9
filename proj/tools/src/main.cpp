#include "ddpc_cli/app.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return ddpc::cli::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}

# priorci/utils package
